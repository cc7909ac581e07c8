//! Dissipation over permissible diffusivities with the multiscale field and
//! without any flow.
use homcascade::cli::commands::{default_sweep_kappas, resolve_dt, resolve_grid};
use homcascade::cutoffs::calibrate_profiles;
use homcascade::field::{FieldM, FieldOptions};
use homcascade::params::{build_schedule, Mode};
use homcascade::solver::{anomalous_sweep, ScalarField, SolveOptions, ZeroVelocity};

fn main() -> homcascade::Result<()> {
    let t_end = 0.05;
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let s = build_schedule(1.2, 2, 1, Mode::Desk)?;
    let kappas = default_sweep_kappas(&s);
    let n = resolve_grid(0, s.eps[1]);
    let field = FieldM::new(&s, &cut, 1, FieldOptions { grid_n: n, ..Default::default() })?;
    let dt = resolve_dt(0.0, field.speed_bound(), n, t_end);
    let opts = SolveOptions { dt, output_every: 10, ..Default::default() };
    let theta0 = ScalarField::default_initial(n);
    let with = anomalous_sweep(&field, 1, &kappas, &theta0, t_end, &opts);
    let without = anomalous_sweep(&ZeroVelocity, 0, &kappas, &theta0, t_end, &opts);
    for (a, b) in with.iter().zip(&without) {
        println!("kappa {:.4e}: dissipation {:.6e} with flow, {:.6e} without", a.kappa, a.dissipation, b.dissipation);
    }
    Ok(())
}
