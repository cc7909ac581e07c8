//! Exponents, length scales and time scales of the construction.
//!
//! Two modes are supported. `Strict` uses the constants of the construction
//! verbatim, which produces astronomically small time scales. `Desk` replaces
//! the time prefactor and the time-scale ratio by configurable values while
//! keeping every divisibility property the construction relies on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Desk,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "desk" => Ok(Mode::Desk),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Relaxed constants used in desk mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskOverrides {
    /// Replaces `2^-25` in the definition of `tau''`. Its reciprocal must be in 4N.
    pub time_prefactor: f64,
    /// Replaces `4 ceil(eps^-delta) + 1`. Must be in 4N+1.
    pub ratio: u64,
    /// Upper bound on every series truncation.
    pub nstar_cap: usize,
    /// Smallest admissible Lambda.
    pub lambda_floor: u64,
}

impl Default for DeskOverrides {
    fn default() -> Self {
        DeskOverrides { time_prefactor: 0.25, ratio: 5, nstar_cap: 8, lambda_floor: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents {
    pub q: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_star: u64,
}

/// Closed-form exponents for a given `beta` in (1, 4/3).
pub fn derive_exponents(beta: f64) -> Result<Exponents> {
    if !(beta > 1.0 && beta < 4.0 / 3.0) {
        return Err(Error::Domain(format!("beta = {beta} outside (1, 4/3)")));
    }
    let q = 0.5 * (1.0 + (2.0 - beta) / (2.0 * (beta - 1.0)));
    let delta = (q - 1.0).powi(2) / (4.0 * (q + 1.0) * (4.0 * q - 1.0));
    let gamma = (q - 1.0) * beta / (q + 1.0);
    // N* only ever bounds truncations through `min`, so saturate near q = 1.
    let n_star = (1.0 / (delta * delta) + 500.0 / delta).ceil();
    let n_star = if n_star.is_finite() && n_star < u64::MAX as f64 { n_star as u64 } else { u64::MAX };
    Ok(Exponents { q, delta, gamma, n_star })
}

/// Ceiling that forgives floating error: values within `1e-9` (relative) of an
/// integer are treated as that integer.
fn robust_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Largest integer exactly representable in an f64.
const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub beta: f64,
    pub q: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_star: u64,
    pub lambda: u64,
    pub depth: usize,
    pub mode: Mode,
    pub desk: DeskOverrides,
    /// `eps[m]` for m = 0..=depth.
    pub eps: Vec<f64>,
    pub a: Vec<f64>,
    /// Time scales; index 0 holds `tau_0 = 1` (and 1 for the primed lists,
    /// which are unused at m = 0).
    pub tau: Vec<f64>,
    pub tau_p: Vec<f64>,
    pub tau_pp: Vec<f64>,
}

impl ParameterSchedule {
    pub fn eps_inv(&self, m: usize) -> u64 {
        (1.0 / self.eps[m]).round() as u64
    }

    /// `tau''_m / tau_m`, an odd integer.
    pub fn ratio_pp(&self, m: usize) -> i64 {
        (self.tau_pp[m] / self.tau[m]).round() as i64
    }

    /// `tau'_m / tau_m`, an odd integer.
    pub fn ratio_p(&self, m: usize) -> i64 {
        (self.tau_p[m] / self.tau[m]).round() as i64
    }

    /// Effective truncation order for any series.
    pub fn truncation(&self) -> usize {
        (self.n_star as usize).min(self.desk.nstar_cap)
    }

    /// Exponent `2 beta / (q + 1)` of the permissible diffusivities.
    pub fn kappa_exponent(&self) -> f64 {
        2.0 * self.beta / (self.q + 1.0)
    }

    /// Permissible interval `[eps^e / 2, 2 eps^e]` at level m.
    pub fn permissible_interval(&self, m: usize) -> (f64, f64) {
        let c = self.eps[m].powf(self.kappa_exponent());
        (0.5 * c, 2.0 * c)
    }

    /// A schedule identical to this one but with depth reduced.
    pub fn truncated(&self, depth: usize) -> ParameterSchedule {
        let d = depth.min(self.depth);
        let mut s = self.clone();
        s.depth = d;
        s.eps.truncate(d + 1);
        s.a.truncate(d + 1);
        s.tau.truncate(d + 1);
        s.tau_p.truncate(d + 1);
        s.tau_pp.truncate(d + 1);
        s
    }
}

/// Builds the full schedule down to `depth`.
pub fn build_schedule(beta: f64, lambda: u64, depth: usize, mode: Mode) -> Result<ParameterSchedule> {
    build_schedule_with(beta, lambda, depth, mode, DeskOverrides::default())
}

pub fn build_schedule_with(
    beta: f64,
    lambda: u64,
    depth: usize,
    mode: Mode,
    desk: DeskOverrides,
) -> Result<ParameterSchedule> {
    let ex = derive_exponents(beta)?;
    if depth < 1 {
        return Err(Error::Domain("depth must be at least 1".into()));
    }
    match mode {
        Mode::Strict if lambda < 128 => {
            return Err(Error::Domain(format!("strict mode needs Lambda >= 128, got {lambda}")))
        }
        Mode::Desk if lambda < desk.lambda_floor.max(2) => {
            return Err(Error::Domain(format!(
                "desk mode needs Lambda >= {}, got {lambda}",
                desk.lambda_floor.max(2)
            )))
        }
        _ => {}
    }
    if mode == Mode::Desk {
        let inv = 1.0 / desk.time_prefactor;
        if !(inv.fract() == 0.0 && inv >= 4.0 && (inv as u64) % 4 == 0) {
            return Err(Error::Invariant(format!(
                "desk time prefactor 1/{inv} does not have reciprocal in 4N"
            )));
        }
        if desk.ratio % 4 != 1 || desk.ratio < 5 {
            return Err(Error::Invariant(format!("desk ratio {} not in 4N+1", desk.ratio)));
        }
    }

    let ln_lambda = (lambda as f64).ln();
    let mut eps = vec![1.0];
    for m in 1..=depth {
        let exponent = ex.q.powi(m as i32) / (ex.q - 1.0);
        let log2 = exponent * ln_lambda / std::f64::consts::LN_2;
        if log2 >= 52.0 {
            return Err(Error::Overflow(format!(
                "eps_{m}^-1 = Lambda^{exponent:.4} ~ 2^{log2:.1} exceeds the exactly representable range"
            )));
        }
        let inv = robust_ceil((exponent * ln_lambda).exp());
        eps.push(1.0 / inv);
    }
    let a: Vec<f64> = eps.iter().map(|e| e.powf(beta - 2.0)).collect();

    let (prefactor, ratio_fn): (f64, Box<dyn Fn(f64) -> f64>) = match mode {
        Mode::Strict => (2f64.powi(-25), Box::new(move |e: f64| 4.0 * robust_ceil(e.powf(-ex.delta)) + 1.0)),
        Mode::Desk => (desk.time_prefactor, Box::new(move |_| desk.ratio as f64)),
    };

    let mut tau = vec![1.0];
    let mut tau_p = vec![1.0];
    let mut tau_pp = vec![1.0];
    for m in 1..=depth {
        let c = robust_ceil(a[m - 1] / eps[m - 1].powf(2.0 * ex.delta));
        let r = ratio_fn(eps[m - 1]);
        let inv_pp = c / prefactor;
        if inv_pp * r * r > EXACT_LIMIT * 1024.0 {
            return Err(Error::Overflow(format!("1/tau_{m} exceeds the representable range")));
        }
        let tpp = 1.0 / inv_pp;
        tau_pp.push(tpp);
        tau_p.push(tpp / r);
        tau.push(tpp / (r * r));
    }

    let s = ParameterSchedule {
        beta,
        q: ex.q,
        delta: ex.delta,
        gamma: ex.gamma,
        n_star: ex.n_star,
        lambda,
        depth,
        mode,
        desk,
        eps,
        a,
        tau,
        tau_p,
        tau_pp,
    };
    let report = validate_schedule(&s);
    if let Some(f) = report.checks.iter().find(|c| c.status == CheckStatus::Fail) {
        return Err(Error::Invariant(format!("{} (margin {:.3e})", f.name, f.margin)));
    }
    Ok(s)
}

/// `l_k`: the window index containing slot k, i.e. the nearest integer to
/// `k tau / tau''`. The ratio is odd, so there are no ties.
pub fn slot_index(schedule: &ParameterSchedule, m: usize, k: i64) -> i64 {
    slot_index_ratio(schedule.ratio_pp(m), k)
}

pub fn slot_index_ratio(r: i64, k: i64) -> i64 {
    (k + (r - 1) / 2).div_euclid(r)
}

/// Outcome of [`choose_start_scale`].
#[derive(Clone, Debug, PartialEq)]
pub enum StartScale {
    Permissible(usize),
    NotPermissible { kappa: f64, below: Option<(usize, f64, f64)>, above: Option<(usize, f64, f64)> },
}

/// Finds the level M whose permissible interval contains `kappa`. When the
/// desk intervals overlap, the level whose interval centre is nearest in log
/// scale wins.
pub fn choose_start_scale(schedule: &ParameterSchedule, kappa: f64) -> Result<StartScale> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
    }
    let mut best: Option<(usize, f64)> = None;
    for m in 1..=schedule.depth {
        let (lo, hi) = schedule.permissible_interval(m);
        if kappa >= lo && kappa <= hi {
            let d = (kappa / (lo * hi).sqrt()).ln().abs();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((m, d));
            }
        }
    }
    if let Some((m, _)) = best {
        return Ok(StartScale::Permissible(m));
    }
    // Intervals move down as m grows. `below` is the nearest interval lying
    // under kappa, `above` the nearest one over it.
    let mut below = None;
    let mut above = None;
    for m in 1..=schedule.depth {
        let (lo, hi) = schedule.permissible_interval(m);
        if hi < kappa && below.is_none() {
            below = Some((m, lo, hi));
        }
        if lo > kappa {
            above = Some((m, lo, hi));
        }
    }
    Ok(StartScale::NotPermissible { kappa, below, above })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    /// Positive when the check passes with room to spare.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    fn push(&mut self, name: String, ok: bool, margin: f64) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.checks.push(Check { name, status, margin });
    }

    fn skip(&mut self, name: String) {
        self.checks.push(Check { name, status: CheckStatus::Skipped, margin: 0.0 });
    }
}

fn near_integer(x: f64) -> Option<u128> {
    let r = x.round();
    if r >= 1.0 && (x - r).abs() <= 1e-6 * r.max(1.0) {
        Some(r as u128)
    } else {
        None
    }
}

/// Re-evaluates every invariant of the schedule from its stored values.
pub fn validate_schedule(s: &ParameterSchedule) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let strict = s.mode == Mode::Strict;

    let q_formula = 0.5 * (1.0 + (2.0 - s.beta) / (2.0 * (s.beta - 1.0)));
    let q_upper = (2.0 - s.beta) / (2.0 * (s.beta - 1.0));
    rep.push(
        "q formula and 1 < q < (2-beta)/(2(beta-1))".into(),
        (s.q - q_formula).abs() < 1e-12 && s.q > 1.0 && s.q < q_upper,
        (s.q - 1.0).min(q_upper - s.q),
    );
    rep.push("eps_0 = 1".into(), s.eps[0] == 1.0, 0.0);

    for m in 1..=s.depth {
        let inv = 1.0 / s.eps[m];
        rep.push(format!("eps_{m}^-1 integer"), near_integer(inv).is_some(), 0.0);
        let sep = s.eps[m - 1] / s.eps[m];
        rep.push(
            format!("eps_{}/eps_{m} >= Lambda", m - 1),
            sep >= s.lambda as f64 * (1.0 - 1e-12),
            sep / s.lambda as f64 - 1.0,
        );
        let am = s.a[m] * s.eps[m] * s.eps[m];
        let want = s.eps[m].powf(s.beta);
        rep.push(format!("a_{m} eps_{m}^2 = eps_{m}^beta"), ((am - want) / want).abs() < 1e-12, 0.0);
    }

    for m in 1..s.depth {
        let name = format!("super-geometric eps_{}", m + 1);
        if strict {
            let lo = (2.0 / 3.0) * s.eps[m].powf(s.q);
            let hi = (4.0 / 3.0) * s.eps[m].powf(s.q);
            let e = s.eps[m + 1];
            rep.push(name, e >= lo && e <= hi, (e / lo).ln().min((hi / e).ln()));
        } else {
            rep.skip(name);
        }
    }

    for m in 1..=s.depth {
        for (label, t) in [("tau", s.tau[m]), ("tau'", s.tau_p[m]), ("tau''", s.tau_pp[m])] {
            let ok = near_integer(1.0 / t).map_or(false, |n| n % 4 == 0);
            rep.push(format!("1/{label}_{m} in 4N"), ok, 0.0);
        }
        for (label, r) in [("tau'/tau", s.tau_p[m] / s.tau[m]), ("tau''/tau", s.tau_pp[m] / s.tau[m])] {
            let ok = near_integer(r).map_or(false, |n| n % 4 == 1);
            rep.push(format!("{label} at m={m} in 4N+1"), ok, 0.0);
        }
        let name = format!("strict time bounds at m={m}");
        if strict {
            let e = s.eps[m - 1];
            let b4 = e.powf(2.0 - s.beta + 4.0 * s.delta);
            let b2 = e.powf(2.0 - s.beta + 2.0 * s.delta);
            let t = s.tau[m];
            let tpp = s.tau_pp[m];
            let lo1 = 2f64.powi(-33) * b4;
            let hi1 = 2f64.powi(-28) * b4;
            let lo2 = 2f64.powi(-25) * b2;
            let hi2 = 2f64.powi(-24) * b2;
            let ok = t >= lo1 && t <= hi1 && tpp >= lo2 && tpp <= hi2;
            let margin = (t / lo1).ln().min((hi1 / t).ln()).min((tpp / lo2).ln()).min((hi2 / tpp).ln());
            rep.push(name, ok, margin);
        } else {
            rep.skip(name);
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_domain_is_open() {
        assert!(derive_exponents(4.0 / 3.0).is_err());
        assert!(derive_exponents(1.0).is_err());
        let e = derive_exponents(4.0 / 3.0 - 1e-12).unwrap();
        assert!((e.q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slot_examples() {
        assert_eq!(slot_index_ratio(25, 0), 0);
        assert_eq!(slot_index_ratio(25, 13), 1);
        assert_eq!(slot_index_ratio(25, 12), 0);
        assert_eq!(slot_index_ratio(25, 25), 1);
        assert_eq!(slot_index_ratio(25, -13), -1);
    }

    #[test]
    fn desk_rejects_bad_overrides() {
        let bad = DeskOverrides { ratio: 7, ..Default::default() };
        assert!(build_schedule_with(1.25, 2, 2, Mode::Desk, bad).is_err());
        let bad = DeskOverrides { time_prefactor: 0.3, ..Default::default() };
        assert!(build_schedule_with(1.25, 2, 2, Mode::Desk, bad).is_err());
    }

    #[test]
    fn strict_overflows_at_depth() {
        match build_schedule(1.25, 128, 4, Mode::Strict) {
            Err(Error::Overflow(_)) => {}
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
