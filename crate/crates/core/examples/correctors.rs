//! Corrector fluxes through one switching window and the averaged
//! diffusivity against `kappa + 9 a^2 eps^4 / (80 kappa)`.
use homcascade::correctors::{cell_problem_oracle, Correctors, Level};
use homcascade::cutoffs::{calibrate_profiles, TimeScales};

fn main() -> homcascade::Result<()> {
    let cut = calibrate_profiles(0.9, 1e-6)?;
    let kappa = 0.01;
    for ratio in [5, 11, 41] {
        let lv = Level { a: 1.0, eps: 0.1, scales: TimeScales::with_ratio(100.0, ratio) };
        let cor = Correctors::new(&cut, lv, kappa)?;
        let r = cor.kbar(1e-9)?;
        println!(
            "tau''/tau = {ratio:>2}: Kbar {:.6e}, reference {:.6e}, deviation {:+.3e}, envelope ratio {:.3}",
            r.kbar,
            r.reference,
            r.deviation,
            r.envelope_ratio()
        );
    }
    let lv = Level { a: 1.0, eps: 0.1, scales: TimeScales::with_ratio(100.0, 5) };
    let cor = Correctors::new(&cut, lv, kappa)?;
    println!("flux J_22 - kappa over slot 1 (steady value {:.4e}):", lv.steady_enhancement(kappa));
    for i in 0..=8 {
        let t = lv.scales.tau * (1.0 + (i as f64 - 4.0) / 6.0);
        println!("  t/tau = {:.3}: {:.6e}", t / lv.scales.tau, cor.flux(t)[1][1] - kappa);
    }
    let o = cell_problem_oracle(lv.a, lv.eps, kappa, [0.0, 0.0])?;
    println!("cell problem: K = {:?}", o);
    Ok(())
}
