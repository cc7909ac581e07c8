//! Step-down ratio between consecutive depths and the two-scale ansatz on a
//! desk schedule. Pass a final time as the first argument (default 0.1).
use homcascade::cascade::{permissible_midpoint, run_cascade};
use homcascade::cli::commands::{resolve_dt, resolve_grid};
use homcascade::correctors::{Correctors, Level};
use homcascade::cutoffs::calibrate_profiles;
use homcascade::field::{FieldM, FieldOptions};
use homcascade::params::{build_schedule, Mode};
use homcascade::solver::{stepdown_ratio, two_scale_ansatz, ScalarField, SolveOptions};

fn main() -> homcascade::Result<()> {
    let t_end: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let s = build_schedule(1.2, 2, 2, Mode::Desk)?;
    let c = run_cascade(&s, &cut, permissible_midpoint(&s, 2))?;
    let n = resolve_grid(0, s.eps[2]);
    let fine = FieldM::new(&s, &cut, 2, FieldOptions { grid_n: n, ..Default::default() })?;
    let coarse = FieldM::new(&s, &cut, 1, FieldOptions { grid_n: n, ..Default::default() })?;
    let dt = resolve_dt(0.0, fine.speed_bound(), n, t_end);
    let opts = SolveOptions { dt, output_every: ((t_end / dt) / 20.0).round().max(1.0) as usize, ..Default::default() };
    let theta0 = ScalarField::default_initial(n);
    println!("grid {n}, dt {dt:.3e}, kappa_2 {:.4e}, kappa_1 {:.4e}", c.kappa[2], c.kappa[1]);
    let runs = stepdown_ratio(&fine, &coarse, c.kappa[2], c.kappa[1], &theta0, t_end, &opts)?;
    let r = &runs.report;
    println!("dissipation {:.6e} / {:.6e}, ratio {:.6}", r.dissipation_fine, r.dissipation_coarse, r.ratio);
    let cor = Correctors::new(&cut, Level::from_schedule(&s, 2), c.kappa[2])?;
    let (_, a) = two_scale_ansatz(&fine, 2, &cor, &runs.fine, &runs.coarse)?;
    println!("ansatz: sup error {:.3e}, corrector-free gap {:.3e}", a.sup_l2_error, a.sup_l2_gap);
    Ok(())
}
