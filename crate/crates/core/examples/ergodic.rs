//! Exponential decay of `<f g(N .)> - <f><g>` for an analytic f, with and
//! without composition by a flow map.
use homcascade::analysis::{ergodic_decay_check, flow_degradation, Regime};
use homcascade::cli::commands::{analytic_profile, ergodic_flow_pair};
use homcascade::cutoffs::calibrate_profiles;
use homcascade::params::{build_schedule, Mode};
use std::f64::consts::PI;

fn main() -> homcascade::Result<()> {
    let f = |x: [f64; 2]| analytic_profile(x[0]);
    let g = |x: [f64; 2]| (2.0 * PI * x[0]).cos();
    let ns: Vec<u32> = (2..=12).collect();
    for regime in [Regime::L1, Regime::L2, Regime::Hminus1] {
        let r = ergodic_decay_check(&f, &g, &ns, regime, None)?;
        println!("{regime:?}: rate {:.4}, R^2 {:.6}, gap at N=12 {:.3e}", r.fit.rate, r.fit.r_squared, r.gaps[10]);
    }
    let s = build_schedule(1.2, 2, 2, Mode::Desk)?;
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let ns: Vec<u32> = (1..=8).map(|i| 2 * i).collect();
    let (plain, flowed) = ergodic_flow_pair(&s, &cut, 0.01, &ns, 32, 4)?;
    let d = flow_degradation(&plain, &flowed)?;
    println!(
        "with flow: rate {:.4} vs {:.4}, factor {:.3} (predicted at most {:.3})",
        d.flow_rate, d.plain_rate, d.fitted_factor, d.predicted_factor
    );
    Ok(())
}
