use homcascade::cascade::approx_levels;
use homcascade::cli::output::fmt_f64;
use homcascade::correctors::{cell_problem_oracle, Level};
use homcascade::cutoffs::{calibrate_profiles, CutoffFamily, TimeScales};
use homcascade::field::map2::shear_map;
use homcascade::field::shear::ShearSpec;
use homcascade::params::{build_schedule, validate_schedule, Mode};
use homcascade::solver::{solve_advdiff, ScalarField, SteadyShear, ZeroVelocity};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn family() -> &'static CutoffFamily {
    static F: OnceLock<CutoffFamily> = OnceLock::new();
    F.get_or_init(|| calibrate_profiles(0.9, 1e-6).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_nest(beta in prop::sample::select(vec![1.2, 1.25, 1.3]), depth in 1usize..=3) {
        let s = build_schedule(beta, 2, depth, Mode::Desk).unwrap();
        prop_assert!(validate_schedule(&s).passed());
        for m in 1..=depth {
            prop_assert!(s.eps[m] < s.eps[m - 1]);
            prop_assert!(s.a[m] > s.a[m - 1]);
            prop_assert!((s.eps[m] * s.eps_inv(m) as f64 - 1.0).abs() < 1e-12);
            prop_assert_eq!(s.ratio_pp(m) % 2, 1);
            prop_assert_eq!(s.ratio_p(m) % 2, 1);
            prop_assert!(s.tau[m] < s.tau_p[m] && s.tau_p[m] < s.tau_pp[m]);
            let (lo, hi) = s.permissible_interval(m);
            prop_assert!((hi / lo - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zeta_is_a_partition_of_unity(t in -50.0f64..50.0, tau in 1e-4f64..1.0) {
        let f = family();
        let kc = (t / tau).round() as i64;
        let mut s = 0.0;
        for k in kc - 2..=kc + 2 {
            let v = f.zeta_k(tau, k, t, 0);
            prop_assert!((0.0..=1.0).contains(&v));
            s += v;
        }
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn odd_xi_cover_the_line(t in -50.0f64..50.0, tau in 1e-4f64..1.0) {
        let f = family();
        let kc = (t / tau).round() as i64;
        let ko = if kc.rem_euclid(2) == 1 { kc } else { kc + 1 };
        let s: f64 = (ko - 4..=ko + 4).step_by(2).map(|k| f.xi_k(tau, k, t, 0)).sum();
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cutoff_profiles_are_even(s in 0.0f64..1.5, d in 0usize..4) {
        let f = family();
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        let scale = f.zeta(s, d).abs().max(1.0);
        prop_assert!((f.zeta(s, d) - sign * f.zeta(-s, d)).abs() <= 1e-9 * scale);
        prop_assert!((f.xi(s, d) - sign * f.xi(-s, d)).abs() <= 1e-9 * f.xi(s, d).abs().max(1.0));
    }

    #[test]
    fn drive_vanishes_near_seams(r in prop::sample::select(vec![3i64, 5, 7]), l in -3i64..3, u in -1.0f64..1.0) {
        let f = family();
        let sc = TimeScales::with_ratio(0.01, r);
        let seam = (l as f64 + 0.5) * sc.tau_pp;
        let t = seam + u * sc.tau_p;
        for k in sc.active_slots(t) {
            prop_assert_eq!(f.drive(&sc, k, t), 0.0);
        }
    }

    #[test]
    fn shears_are_divergence_free(k in -8i64..8, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0) {
        let s = ShearSpec::new(1, k, 3.0, 0.125);
        let (_, _, g) = s.eval([x0, x1]);
        prop_assert!((g[0][0] + g[1][1]).abs() < 1e-12);
    }

    #[test]
    fn shear_maps_preserve_area(k in -8i64..8, amount in -5.0f64..5.0, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0) {
        let s = ShearSpec::new(1, k, 2.0, 0.25);
        let t = ShearSpec::new(1, k + 1, 2.0, 0.25);
        let a = shear_map(&s, amount, [x0, x1]);
        let b = shear_map(&t, -amount, a.y);
        prop_assert!((a.det() - 1.0).abs() < 1e-12);
        prop_assert!((a.then(&b).det() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cell_problem_is_symmetric_and_enhancing(a in 0.1f64..10.0, eps in 0.05f64..0.5, kappa in 1e-3f64..1.0, v in -50.0f64..50.0) {
        let k = cell_problem_oracle(a, eps, kappa, [v, 0.0]).unwrap();
        prop_assert!((k[0][1] - k[1][0]).abs() <= 1e-12 * k[1][1]);
        prop_assert!(k[0][0] >= kappa * (1.0 - 1e-12));
        prop_assert!(k[1][1] >= kappa * (1.0 - 1e-12));
    }

    #[test]
    fn cascade_recursion_only_grows(kappa in 1e-5f64..1e-1, depth in 1usize..=3) {
        let s = build_schedule(1.25, 2, depth, Mode::Desk).unwrap();
        let levels: Vec<Level> = (0..=depth).map(|m| Level::from_schedule(&s, m)).collect();
        let k = approx_levels(&levels, kappa);
        prop_assert_eq!(k[depth], kappa);
        for m in 1..=depth {
            prop_assert!(k[m - 1] > k[m]);
            prop_assert!(k[m - 1] >= 2.0 * (9.0 / 80.0 * levels[m].a.powi(2) * levels[m].eps.powi(4)).sqrt() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn floats_survive_csv_formatting(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn variance_never_grows(k1 in 1i64..4, k2 in 0i64..4, kappa in 0.0f64..0.05, a in 0.0f64..2.0) {
        let n = 32;
        let theta0 = ScalarField::from_fn(n, |x| (2.0 * PI * (k1 as f64 * x[0] + k2 as f64 * x[1])).cos()).unwrap();
        let shear = SteadyShear { a, eps: 0.5, along_e1: true };
        let (_, d) = solve_advdiff(&shear, kappa, &theta0, 0.2, 2e-3).unwrap();
        for w in d.l2sq.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
        prop_assert!(d.max_balance_residual() < 1e-4);
        let (_, z) = solve_advdiff(&ZeroVelocity, kappa, &theta0, 0.2, 2e-3).unwrap();
        let kk = 4.0 * PI * PI * (k1 * k1 + k2 * k2) as f64;
        let exact = 0.5 * (-2.0 * kappa * kk * 0.2).exp();
        prop_assert!((z.l2sq.last().unwrap() / exact - 1.0).abs() < 1e-9);
    }
}
