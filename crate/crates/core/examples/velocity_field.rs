//! Samples the multiscale velocity field, checks incompressibility and
//! estimates its Hölder quotient at increasing depth.
use homcascade::cutoffs::calibrate_profiles;
use homcascade::field::{divergence_ratio, holder_estimate, FieldM, FieldOptions};
use homcascade::params::{build_schedule, Mode};

fn main() -> homcascade::Result<()> {
    let beta = 1.3;
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let s = build_schedule(beta, 2, 3, Mode::Desk)?;
    let alpha = (beta - 1.0) / 2.0;
    for depth in 1..=3 {
        let field = FieldM::new(&s, &cut, depth, FieldOptions::default())?;
        let h = holder_estimate(&field, alpha, 2000, 7)?;
        println!(
            "depth {depth}: speed bound {:.3}, Hölder quotients spatial {:.3} temporal {:.3} ({} evaluations)",
            field.speed_bound(),
            h.spatial,
            h.temporal,
            h.evaluations
        );
    }
    let field = FieldM::new(&s, &cut, 1, FieldOptions::default())?;
    let t = 0.5 * s.tau[1];
    println!("b(t, (0.3, 0.7)) = {:?}", field.velocity(t, [0.3, 0.7])?);
    println!("relative divergence on a 64 grid: {:.2e}", divergence_ratio(&field, t, 64)?);
    Ok(())
}
