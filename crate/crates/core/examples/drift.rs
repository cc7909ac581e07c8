//! Suppression of the shear enhancement by a mean drift.
use homcascade::analysis::drift_enhancement;
use homcascade::cli::commands::log_spaced;

fn main() -> homcascade::Result<()> {
    let t = drift_enhancement(1.0, 0.125, 0.01, &log_spaced(10.0, 1000.0, 9))?;
    for r in &t.rows {
        println!("v = {:>8.2}: enhancement {:.6e}, single mode {:.6e}", r.v, r.enhancement, r.closed_form);
    }
    println!("log-log slope {:.4} (R^2 {:.6})", t.slope, t.r_squared);
    Ok(())
}
