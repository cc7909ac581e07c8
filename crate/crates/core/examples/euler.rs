//! Period-averaged almost-Euler residual of the level-1 field for two
//! values of the frequency ratio.
use homcascade::analysis::euler_residual_series;
use homcascade::cutoffs::calibrate_profiles;
use homcascade::field::{FieldM, FieldOptions};
use homcascade::params::{build_schedule, Mode};

fn main() -> homcascade::Result<()> {
    let cut = calibrate_profiles(0.9, 1e-6)?;
    for lambda in [2, 3] {
        let s = build_schedule(1.25, lambda, 1, Mode::Desk)?;
        let field = FieldM::new(&s, &cut, 1, FieldOptions::default())?;
        let period = 2.0 * s.tau[1];
        let samples = 12;
        let off = 0.25 * period / samples as f64;
        let r = euler_residual_series(&field, off, period + off, samples, 64, 1e-3 * s.tau[1])?;
        println!(
            "Lambda = {lambda} (1/eps = {}): mean residual {:.4e}, max {:.4e}, {} samples skipped",
            s.eps_inv(1),
            r.mean,
            r.max,
            r.skipped
        );
    }
    Ok(())
}
