//! One-scale homogenization: the decay of a large-scale mode under a steady
//! and an alternating shear, against the cell-problem values.
use homcascade::correctors::cell_problem_oracle;
use homcascade::solver::{
    measure_effective_diffusivity, measure_isotropized_diffusivity, AlternatingShear, SolveOptions, SteadyShear,
    VelocityField,
};

fn main() -> homcascade::Result<()> {
    let (a, eps) = (1.0, 0.125);
    let kappa = a * eps * eps / 3.0;
    let shear = SteadyShear { a, eps, along_e1: false };
    let n = 128;
    let dt = 0.4 / (shear.speed_bound() * n as f64);
    let opts = SolveOptions { dt, output_every: (0.1 / dt).round() as usize, ..Default::default() };
    let m = measure_effective_diffusivity(&shear, kappa, (0, 1), (2.0, 8.0), n, &opts)?;
    let oracle = cell_problem_oracle(a, eps, kappa, [0.0, 0.0])?[1][1];
    println!("steady shear: kappa_eff {:.5e}, cell problem {:.5e}, R^2 {:.6}", m.kappa_eff, oracle, m.r_squared);

    let (eps, kappa) = (1.0 / 16.0, 1.0 / 256.0);
    let alt = AlternatingShear { a: 1.0, eps, tau: 100.0 * eps * eps / kappa };
    let opts = SolveOptions { dt: 0.008, output_every: 1000, ..Default::default() };
    let r = measure_isotropized_diffusivity(&alt, kappa, 128, &opts)?;
    println!(
        "alternating shears: {:.5e} / {:.5e} against the duty-cycle value {:.5e}",
        r.kappa_x1, r.kappa_x2, r.oracle
    );
    Ok(())
}
