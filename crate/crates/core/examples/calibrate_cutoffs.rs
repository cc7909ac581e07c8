//! Calibrates the time cutoffs and prints the verification report.
use homcascade::cutoffs::{calibrate_profiles, verify_family};
use homcascade::params::{build_schedule, Mode};

fn main() -> homcascade::Result<()> {
    let t = std::time::Instant::now();
    let fam = calibrate_profiles(0.9, 1e-6)?;
    println!("sigma = {:.6}, sharpness = {:.4}", fam.sigma, fam.sharpness);
    println!("int zeta^2 = {:.12}", fam.zeta_l2sq);
    let s = build_schedule(1.25, 2, 2, Mode::Desk)?;
    let rep = verify_family(&fam, &s, 1, 100_000);
    println!("partition deviations: zeta {:.2e}, xi {:.2e}, xi-hat {:.2e}", rep.partition_zeta, rep.partition_xi, rep.partition_xi_hat);
    println!("support violations: {}, overlap distance {:.4} tau", rep.support_violations, rep.overlap_distance);
    println!("derivative constants: {:?}", rep.zeta_deriv_consts.iter().map(|c| format!("{c:.3e}")).collect::<Vec<_>>());
    println!("elapsed {:?}", t.elapsed());
    Ok(())
}
