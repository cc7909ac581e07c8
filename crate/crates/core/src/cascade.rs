//! The renormalized-diffusivity recursion `kappa_{m-1} = Kbar_m(kappa_m)`,
//! its closed-form approximation and the bounds that keep it controlled.

use crate::correctors::{Correctors, KbarReport, Level};
use crate::cutoffs::CutoffFamily;
use crate::error::{Error, Result};
use crate::params::{choose_start_scale, Mode, ParameterSchedule, StartScale};
use serde::Serialize;

/// Relative quadrature tolerance of each `Kbar`, as a fraction of the
/// ergodic envelope.
const ENVELOPE_FRACTION: f64 = 1e-3;

/// Lower and upper constants the control bounds must satisfy.
pub const DESK_C_LOWER: f64 = 0.1;
pub const DESK_C_UPPER: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct DiffusivityCascade {
    pub schedule: ParameterSchedule,
    /// Starting level M.
    pub start_m: usize,
    /// `kappa[m]` for m = 0..=M.
    pub kappa: Vec<f64>,
    /// The approximate recursion, same indexing.
    pub kappa_prime: Vec<f64>,
    /// `ratios[m] = kappa_{m-1} / kappa_m` for m = 1..=M; index 0 is unused (1).
    pub ratios: Vec<f64>,
    /// `exprat[m] = eps_m^2 / (kappa_m tau_m)` for m = 1..=M; index 0 is unused.
    pub exprat: Vec<f64>,
    /// The averaged flux computed at each level, indexed by m = 1..=M (index 0 empty).
    pub reports: Vec<Option<KbarReport>>,
    /// Set when the starting diffusivity lies outside every permissible interval.
    pub warnings: Vec<String>,
}

impl DiffusivityCascade {
    /// `|kappa_m - kappa'_m| / kappa'_m` for every m.
    pub fn relative_gaps(&self) -> Vec<f64> {
        self.kappa.iter().zip(&self.kappa_prime).map(|(k, kp)| (k - kp).abs() / kp).collect()
    }
}

/// Chooses M for `kappa`. Outside every permissible interval desk mode falls
/// back to the nearest one (log scale) and records a warning; strict mode
/// refuses.
pub fn start_level(schedule: &ParameterSchedule, kappa: f64) -> Result<(usize, Option<String>)> {
    match choose_start_scale(schedule, kappa)? {
        StartScale::Permissible(m) => Ok((m, None)),
        StartScale::NotPermissible { .. } if schedule.mode == Mode::Strict => {
            Err(Error::NotPermissible { kappa })
        }
        StartScale::NotPermissible { .. } => {
            let mut best = (1, f64::INFINITY);
            for m in 1..=schedule.depth {
                let (lo, hi) = schedule.permissible_interval(m);
                let d = (kappa / (lo * hi).sqrt()).ln().abs();
                if d < best.1 {
                    best = (m, d);
                }
            }
            let (lo, hi) = schedule.permissible_interval(best.0);
            let msg = format!(
                "kappa = {kappa:.6e} is not permissible; starting at M = {} whose interval is [{lo:.6e}, {hi:.6e}]",
                best.0
            );
            Ok((best.0, Some(msg)))
        }
    }
}

/// Midpoint (geometric) of the permissible interval at level m.
pub fn permissible_midpoint(schedule: &ParameterSchedule, m: usize) -> f64 {
    let (lo, hi) = schedule.permissible_interval(m);
    (lo * hi).sqrt()
}

/// Runs the recursion from the level chosen for `kappa`.
pub fn run_cascade(schedule: &ParameterSchedule, cutoffs: &CutoffFamily, kappa: f64) -> Result<DiffusivityCascade> {
    let (m, warning) = start_level(schedule, kappa)?;
    let mut c = run_cascade_from(schedule, cutoffs, kappa, m)?;
    c.warnings.extend(warning);
    Ok(c)
}

/// Runs the recursion from an explicit starting level.
pub fn run_cascade_from(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    kappa: f64,
    start_m: usize,
) -> Result<DiffusivityCascade> {
    if start_m > schedule.depth {
        return Err(Error::Domain(format!("start level {start_m} exceeds depth {}", schedule.depth)));
    }
    let levels: Vec<Level> = (0..=start_m).map(|m| Level::from_schedule(schedule, m)).collect();
    let (kappa_list, reports) = recurse_levels(&levels, cutoffs, kappa)?;
    let kappa_prime = approx_levels(&levels, kappa);
    let mut ratios = vec![1.0; start_m + 1];
    let mut exprat = vec![0.0; start_m + 1];
    for m in 1..=start_m {
        ratios[m] = kappa_list[m - 1] / kappa_list[m];
        exprat[m] = levels[m].exprat(kappa_list[m]);
    }
    Ok(DiffusivityCascade {
        schedule: schedule.truncated(start_m),
        start_m,
        kappa: kappa_list,
        kappa_prime,
        ratios,
        exprat,
        reports,
        warnings: Vec::new(),
    })
}

/// The recursion over explicit levels; `levels[m]` for m = 0..=M, level 0
/// is never used.
pub fn recurse_levels(
    levels: &[Level],
    cutoffs: &CutoffFamily,
    kappa: f64,
) -> Result<(Vec<f64>, Vec<Option<KbarReport>>)> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
    }
    let top = levels.len().saturating_sub(1);
    let mut k = vec![0.0; top + 1];
    let mut reports = vec![None; top + 1];
    k[top] = kappa;
    for m in (1..=top).rev() {
        let lv = levels[m];
        let corr = Correctors::new(cutoffs, lv, k[m])?;
        let tol = ENVELOPE_FRACTION * (lv.exprat(k[m]) + lv.scales.tau_p / lv.scales.tau_pp);
        let rep = corr.kbar(tol)?;
        k[m - 1] = rep.kbar;
        reports[m] = Some(rep);
    }
    Ok((k, reports))
}

/// `kappa'_{m-1} = kappa'_m + 9 a_m^2 eps_m^4 / (80 kappa'_m)` started at the
/// level chosen for `kappa`. Indexed by m = 0..=M.
pub fn approx_cascade(schedule: &ParameterSchedule, kappa: f64) -> Result<Vec<f64>> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
    }
    let (m, _) = start_level(schedule, kappa)?;
    let levels: Vec<Level> = (0..=m).map(|j| Level::from_schedule(schedule, j)).collect();
    Ok(approx_levels(&levels, kappa))
}

pub fn approx_levels(levels: &[Level], kappa: f64) -> Vec<f64> {
    let top = levels.len().saturating_sub(1);
    let mut k = vec![0.0; top + 1];
    k[top] = kappa;
    for m in (1..=top).rev() {
        k[m - 1] = levels[m].reference_kbar(k[m]);
    }
    k
}

/// One side of a control bound at one level.
#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub m: usize,
    /// The bounded quantity divided by its scale.
    pub normalized: f64,
    /// `ln(normalized / c_lower)`, `ln(c_upper / normalized)`.
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeBounds {
    /// `kappa_m / (a_m eps_m^{2+gamma})` for m = 1..M-1.
    pub kappa_rows: Vec<BoundRow>,
    /// The same ratio at m = 0, outside the range where the bound applies.
    pub kappa_level0: Option<f64>,
    /// `(eps_m^2/(kappa_m tau_m)) / eps_{m-1}^{2 delta}` for m = 1..M-1.
    pub exprat_rows: Vec<BoundRow>,
    /// Fitted constants: smallest and largest normalized values.
    pub kappa_c: f64,
    pub kappa_cc: f64,
    pub exprat_c: f64,
    pub exprat_cc: f64,
    /// `s_m = kappa'_m sqrt(80/9) / (a_m eps_m^{2+gamma})` for m = 0..=M.
    pub s: Vec<f64>,
    /// Smallest C with `max(s_m, 1/s_m) <= 4 prod_{j>m} (1 + C eps_{j-1}^{min(2 gamma q, 1)})`
    /// for every 1 <= m < M.
    pub identity_c: f64,
    /// Largest relative gap between the recursion and its approximation.
    pub max_relative_gap: f64,
    pub passed: bool,
}

/// Evaluates both control bounds over the computed cascade.
pub fn check_cascade_bounds(c: &DiffusivityCascade) -> CascadeBounds {
    let s = &c.schedule;
    let mm = c.start_m;
    let scale = |m: usize| s.a[m] * s.eps[m].powf(2.0 + s.gamma);
    let row = |m: usize, v: f64| {
        let lower_margin = (v / DESK_C_LOWER).ln();
        let upper_margin = (DESK_C_UPPER / v).ln();
        BoundRow { m, normalized: v, lower_margin, upper_margin, pass: lower_margin >= 0.0 && upper_margin >= 0.0 }
    };
    // The super-geometric relation eps_{m+1} ~ eps_m^q behind the bound fails
    // between eps_0 = 1 and eps_1, so the m = 0 row is reported but not judged.
    let kappa_level0 = if mm > 0 { Some(c.kappa[0] / scale(0)) } else { None };
    let kappa_rows: Vec<BoundRow> = (1..mm).map(|m| row(m, c.kappa[m] / scale(m))).collect();
    let exprat_rows: Vec<BoundRow> =
        (1..mm).map(|m| row(m, c.exprat[m] / s.eps[m - 1].powf(2.0 * s.delta))).collect();
    let fit = |rows: &[BoundRow]| {
        if rows.is_empty() {
            return (DESK_C_LOWER, DESK_C_UPPER);
        }
        rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.normalized), hi.max(r.normalized)))
    };
    let (kappa_c, kappa_cc) = fit(&kappa_rows);
    let (exprat_c, exprat_cc) = fit(&exprat_rows);

    let sv: Vec<f64> = (0..=mm).map(|m| c.kappa_prime[m] * (80.0f64 / 9.0).sqrt() / scale(m)).collect();
    let expo = (2.0 * s.gamma * s.q).min(1.0);
    let mut identity_c = 0.0f64;
    for m in 1..mm {
        let worst = sv[m].max(1.0 / sv[m]);
        if worst <= 4.0 {
            continue;
        }
        // smallest C making the product large enough, by bisection
        let prod = |cc: f64| (m + 1..=mm).map(|j| 1.0 + cc * s.eps[j - 1].powf(expo)).product::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        while 4.0 * prod(hi) < worst {
            hi *= 2.0;
            if hi > 1e12 {
                break;
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if 4.0 * prod(mid) >= worst {
                hi = mid
            } else {
                lo = mid
            }
        }
        identity_c = identity_c.max(hi);
    }
    let max_relative_gap = c.relative_gaps().into_iter().fold(0.0, f64::max);
    let passed = kappa_rows.iter().chain(&exprat_rows).all(|r| r.pass);
    CascadeBounds {
        kappa_rows,
        kappa_level0,
        exprat_rows,
        kappa_c,
        kappa_cc,
        exprat_c,
        exprat_cc,
        s: sv,
        identity_c,
        max_relative_gap,
        passed,
    }
}

/// Runs independent starts concurrently.
pub fn run_cascades(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    kappas: &[f64],
) -> Vec<Result<DiffusivityCascade>> {
    std::thread::scope(|sc| {
        let handles: Vec<_> =
            kappas.iter().map(|&k| sc.spawn(move || run_cascade(schedule, cutoffs, k))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("cascade thread panicked".into())))).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoffs::{calibrate_profiles, TimeScales};
    use crate::params::build_schedule;

    fn cut() -> CutoffFamily {
        calibrate_profiles(0.9, 1e-6).unwrap()
    }

    #[test]
    fn approx_single_step() {
        let lv = [
            Level { a: 1.0, eps: 1.0, scales: TimeScales::with_ratio(1.0, 5) },
            Level { a: 1.0, eps: 0.1, scales: TimeScales::with_ratio(1.0, 5) },
        ];
        let k = approx_levels(&lv, 0.01);
        let want = 0.01 + 9e-4 / (80.0 * 0.01);
        assert!((k[0] - want).abs() < 1e-15);
        assert!((k[0] - 0.011125).abs() < 1e-15);
    }

    #[test]
    fn disabled_shears_keep_kappa() {
        let sc = TimeScales::with_ratio(0.01, 5);
        let lv = [
            Level { a: 0.0, eps: 1.0, scales: sc },
            Level { a: 0.0, eps: 0.1, scales: sc },
            Level { a: 0.0, eps: 0.02, scales: sc },
        ];
        let (k, _) = recurse_levels(&lv, &cut(), 3e-3).unwrap();
        assert!(k.iter().all(|&v| v == 3e-3));
    }

    #[test]
    fn desk_cascade_tracks_approximation() {
        let s = build_schedule(1.25, 2, 2, Mode::Desk).unwrap();
        let kappa = permissible_midpoint(&s, 2);
        let c = run_cascade(&s, &cut(), kappa).unwrap();
        assert_eq!(c.start_m, 2);
        assert!(c.kappa[0] / c.kappa[2] > 1.0);
        for (m, g) in c.relative_gaps().iter().enumerate() {
            assert!(*g < 0.2, "m={m} gap {g}");
        }
        for m in 1..=2 {
            assert!(c.kappa[m - 1] > c.kappa[m]);
        }
    }
}
