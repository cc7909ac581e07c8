//! Builds desk schedules for a few exponents and prints their checks.
use homcascade::params::{build_schedule, validate_schedule, CheckStatus, Mode};

fn main() -> homcascade::Result<()> {
    for beta in [1.2, 1.25, 1.3] {
        let s = build_schedule(beta, 2, 3, Mode::Desk)?;
        println!("beta = {beta}: q = {:.4}, delta = {:.4}, gamma = {:.4}, N* = {}", s.q, s.delta, s.gamma, s.n_star);
        for m in 0..=s.depth {
            println!(
                "  m={m}  1/eps={:<6} a={:<10.4} tau={:<10.3e} tau'={:<10.3e} tau''={:.3e}",
                s.eps_inv(m),
                s.a[m],
                s.tau[m],
                s.tau_p[m],
                s.tau_pp[m]
            );
        }
        let rep = validate_schedule(&s);
        let failed: Vec<_> = rep.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.as_str()).collect();
        println!("  checks passed: {} {:?}", rep.passed(), failed);
    }
    match build_schedule(1.25, 2, 1, Mode::Strict) {
        Ok(_) => println!("strict schedule built"),
        Err(e) => println!("strict mode: {e}"),
    }
    Ok(())
}
