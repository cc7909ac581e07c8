//! Renormalized diffusivity cascades from permissible starts, next to the
//! approximate recursion, with the control bounds.
use homcascade::cascade::{check_cascade_bounds, permissible_midpoint, run_cascade};
use homcascade::cutoffs::calibrate_profiles;
use homcascade::params::{build_schedule, Mode};

fn main() -> homcascade::Result<()> {
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let s = build_schedule(1.3, 2, 2, Mode::Desk)?;
    for m in 1..=s.depth {
        let c = run_cascade(&s, &cut, permissible_midpoint(&s, m))?;
        println!("start at level {} with kappa = {:.4e}", c.start_m, c.kappa[c.start_m]);
        for j in (0..=c.start_m).rev() {
            println!("  m={j}: kappa {:.6e}  approx {:.6e}  exprat {:.3e}", c.kappa[j], c.kappa_prime[j], c.exprat[j]);
        }
        let b = check_cascade_bounds(&c);
        println!("  bounds passed {}, max relative gap {:.3e}", b.passed, b.max_relative_gap);
    }
    Ok(())
}
