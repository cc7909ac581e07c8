//! Smooth time cutoffs.
//!
//! Every profile is a difference of two smooth steps. A step `S_w` rises from
//! 0 to 1 across `[-w, w]` and is built from
//! `h_p(y) = 1 / (1 + exp(p (1/y - 1/(1-y))))` on `(0, 1)`. Writing the
//! profiles as differences of shifted steps makes every partition of unity a
//! telescoping sum, so those identities hold structurally.
//!
//! * `zeta(s) = S_sigma(s + 1/2) - S_sigma(s - 1/2)`, supported in
//!   `[-1/2 - sigma, 1/2 + sigma]`.
//! * `xi(s) = S_{1/4}(s + 1) - S_{1/4}(s - 1)`, equal to 1 on `[-3/4, 3/4]`.
//! * the hatted families use steps of width `tau'` placed at the window edges.

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};
use crate::params::{slot_index, ParameterSchedule};
use crate::quad;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DERIV_CAP: usize = 6;

/// The step profile `h_p` and its first `n` derivatives at `y`.
pub fn h_derivs(p: f64, y: f64, n: usize) -> [f64; MAX_ORDER + 1] {
    let mut out = [0.0; MAX_ORDER + 1];
    if y <= 0.0 {
        return out;
    }
    if y >= 1.0 {
        out[0] = 1.0;
        return out;
    }
    let x = Jet::variable(y, n);
    let one_minus = Jet::affine(1.0 - y, -1.0, n);
    let g = x.recip().sub(&one_minus.recip()).scale(p);
    // Stable logistic: use exp(-|g|) so the exponential never overflows.
    let h = if g.c[0] > 0.0 {
        let w = g.scale(-1.0).exp();
        w.mul(&w.add_const(1.0).recip())
    } else {
        g.exp().add_const(1.0).recip()
    };
    for j in 0..=n {
        out[j] = h.deriv(j);
    }
    out
}

/// Fast order-0 path of [`h_derivs`].
#[inline]
pub fn h_value(p: f64, y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        let g = p * (1.0 / y - 1.0 / (1.0 - y));
        if g > 0.0 {
            let w = (-g).exp();
            w / (1.0 + w)
        } else {
            1.0 / (1.0 + g.exp())
        }
    }
}

/// Which family to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Zeta,
    Xi,
    ZetaHat,
    XiHat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    /// Half-width of each ramp of `zeta`.
    pub sigma: f64,
    /// Profile parameter `p` of `h_p`.
    pub sharpness: f64,
    pub deriv_cap: usize,
    /// `int_0^1 h_p^2`.
    pub h_l2sq: f64,
    /// `int zeta^2` measured by an independent quadrature.
    pub zeta_l2sq: f64,
}

impl CutoffFamily {
    /// Derivative `j` of the step of half-width `w` at `x`.
    #[inline]
    pub fn step(&self, w: f64, x: f64, deriv: usize) -> f64 {
        let y = (x + w) / (2.0 * w);
        if deriv == 0 {
            h_value(self.sharpness, y)
        } else {
            h_derivs(self.sharpness, y, deriv)[deriv] / (2.0 * w).powi(deriv as i32)
        }
    }

    fn bump(&self, w: f64, left: f64, right: f64, t: f64, deriv: usize) -> f64 {
        self.step(w, t - left, deriv) - self.step(w, t - right, deriv)
    }

    /// Base profile `zeta` on the unit scale.
    pub fn zeta(&self, s: f64, deriv: usize) -> f64 {
        self.bump(self.sigma, -0.5, 0.5, s, deriv)
    }

    /// Base profile `xi` on the unit scale.
    pub fn xi(&self, s: f64, deriv: usize) -> f64 {
        self.bump(0.25, -1.0, 1.0, s, deriv)
    }

    /// `zeta_{m,k}(t) = zeta((t - k tau)/tau)` for a given `tau`.
    pub fn zeta_k(&self, tau: f64, k: i64, t: f64, deriv: usize) -> f64 {
        self.zeta((t - k as f64 * tau) / tau, deriv) / tau.powi(deriv as i32)
    }

    pub fn xi_k(&self, tau: f64, k: i64, t: f64, deriv: usize) -> f64 {
        self.xi((t - k as f64 * tau) / tau, deriv) / tau.powi(deriv as i32)
    }

    /// `zeta-hat_{m,l}`: 1 on `[(l-1/2)tau''+2tau', (l+1/2)tau''-2tau']`,
    /// supported in `[(l-1/2)tau''+tau', (l+1/2)tau''-tau']`.
    pub fn zeta_hat_l(&self, tau_p: f64, tau_pp: f64, l: i64, t: f64, deriv: usize) -> f64 {
        let lf = l as f64;
        let left = (lf - 0.5) * tau_pp + 1.5 * tau_p;
        let right = (lf + 0.5) * tau_pp - 1.5 * tau_p;
        self.bump(0.5 * tau_p, left, right, t, deriv)
    }

    /// `xi-hat_{m,l}`: 1 on the support of `zeta-hat_{m,l}`, supported in
    /// `[(l-1/2)tau''-tau', (l+1/2)tau''+tau']`.
    pub fn xi_hat_l(&self, tau_p: f64, tau_pp: f64, l: i64, t: f64, deriv: usize) -> f64 {
        let lf = l as f64;
        self.bump(tau_p, (lf - 0.5) * tau_pp, (lf + 0.5) * tau_pp, t, deriv)
    }

    /// Generic scaled and shifted evaluation at level m of a schedule.
    pub fn eval(
        &self,
        which: Which,
        schedule: &ParameterSchedule,
        m: usize,
        index: i64,
        t: f64,
        deriv: usize,
    ) -> Result<f64> {
        if deriv > self.deriv_cap {
            return Err(Error::CapExceeded { order: deriv, cap: self.deriv_cap });
        }
        if m == 0 || m > schedule.depth {
            return Err(Error::Domain(format!("level {m} outside 1..={}", schedule.depth)));
        }
        let (tau, tp, tpp) = (schedule.tau[m], schedule.tau_p[m], schedule.tau_pp[m]);
        Ok(match which {
            Which::Zeta => self.zeta_k(tau, index, t, deriv),
            Which::Xi => self.xi_k(tau, index, t, deriv),
            Which::ZetaHat => self.zeta_hat_l(tp, tpp, index, t, deriv),
            Which::XiHat => self.xi_hat_l(tp, tpp, index, t, deriv),
        })
    }

    /// The product `zeta-hat_{l_k} zeta_k` driving slot k at level m.
    pub fn drive(&self, scales: &TimeScales, k: i64, t: f64) -> f64 {
        let z = self.zeta_k(scales.tau, k, t, 0);
        if z == 0.0 {
            return 0.0;
        }
        let l = crate::params::slot_index_ratio(scales.ratio_pp, k);
        z * self.zeta_hat_l(scales.tau_p, scales.tau_pp, l, t, 0)
    }
}

/// The three time scales of one level, detached from a schedule so that
/// single-level experiments can use arbitrary values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub tau: f64,
    pub tau_p: f64,
    pub tau_pp: f64,
    /// `tau''/tau`, an odd integer.
    pub ratio_pp: i64,
}

impl TimeScales {
    pub fn from_schedule(s: &ParameterSchedule, m: usize) -> Self {
        TimeScales { tau: s.tau[m], tau_p: s.tau_p[m], tau_pp: s.tau_pp[m], ratio_pp: s.ratio_pp(m) }
    }

    /// Scales with a given `tau` and ratio `r`: `tau' = r tau`, `tau'' = r^2 tau`.
    pub fn with_ratio(tau: f64, r: i64) -> Self {
        TimeScales { tau, tau_p: r as f64 * tau, tau_pp: (r * r) as f64 * tau, ratio_pp: r * r }
    }

    /// Slots whose `zeta_k` support contains t.
    pub fn active_slots(&self, t: f64) -> std::ops::RangeInclusive<i64> {
        let s = t / self.tau;
        let lo = (s - 2.0 / 3.0).ceil() as i64;
        let hi = (s + 2.0 / 3.0).floor() as i64;
        lo..=hi
    }
}

/// `int_0^1 h_p^2` by adaptive quadrature.
pub fn h_l2sq(p: f64) -> Result<f64> {
    quad::integrate(|y| h_value(p, y).powi(2), 0.0, 1.0, 1e-14, 4000)
}

/// Derivative growth of a ramp of half-width `sigma`:
/// `max_j (sup |S^(j)|)^(1/j)` over j = 1..=4, from a fine scan of `h_p`.
fn ramp_growth(p: f64, sigma: f64) -> f64 {
    let n = 1000;
    let mut sup = [0.0f64; 5];
    for i in 1..n {
        let d = h_derivs(p, i as f64 / n as f64, 4);
        for j in 1..=4 {
            sup[j] = sup[j].max(d[j].abs());
        }
    }
    (1..=4).map(|j| (sup[j] / (2.0 * sigma).powi(j as i32)).powf(1.0 / j as f64)).fold(0.0, f64::max)
}

/// Calibrates `zeta` so that `int zeta^2 = target` within `tol`.
///
/// For a sharpness `p`, `int zeta^2 = 1 - 2 sigma (1 - 2 I(p))` with
/// `I(p) = int_0^1 h_p^2`, which is solved for `sigma`. Among sharpness values
/// in the search box giving `sigma <= 1/6`, the one whose ramps have the
/// slowest derivative growth is kept. The result is checked by integrating `zeta^2`
/// directly.
pub fn calibrate_profiles(target: f64, tol: f64) -> Result<CutoffFamily> {
    if !(target > 0.0 && target < 1.0) || !(tol > 0.0) {
        return Err(Error::Domain(format!("target {target} / tol {tol} out of range")));
    }
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let n = 48;
    for i in 0..=n {
        // log-uniform box p in [0.1, 10]
        let p = 10f64.powf(-1.0 + 2.0 * i as f64 / n as f64);
        let ih = h_l2sq(p)?;
        let sigma = (1.0 - target) / (2.0 * (1.0 - 2.0 * ih));
        if !(sigma > 0.0 && sigma <= 1.0 / 6.0) {
            continue;
        }
        let slope = ramp_growth(p, sigma);
        if best.map_or(true, |b| slope < b.3) {
            best = Some((p, sigma, ih, slope));
        }
    }
    let (p, sigma, ih, _) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no sharpness in [0.1, 10] reaches int zeta^2 = {target} with sigma <= 1/6"
        ))
    })?;
    let mut fam = CutoffFamily { sigma, sharpness: p, deriv_cap: DEFAULT_DERIV_CAP, h_l2sq: ih, zeta_l2sq: 0.0 };
    fam.zeta_l2sq = zeta_l2sq_direct(&fam)?;
    if (fam.zeta_l2sq - target).abs() >= tol {
        return Err(Error::Infeasible(format!(
            "direct quadrature gives {} against target {target}",
            fam.zeta_l2sq
        )));
    }
    Ok(fam)
}

/// `int zeta^2` integrated piecewise over the two ramps and the plateau.
pub fn zeta_l2sq_direct(f: &CutoffFamily) -> Result<f64> {
    let s = f.sigma;
    let ramp = |a: f64, b: f64| quad::integrate(|t| f.zeta(t, 0).powi(2), a, b, 1e-14, 4000);
    Ok(ramp(-0.5 - s, -0.5 + s)? + (1.0 - 2.0 * s) + ramp(0.5 - s, 0.5 + s)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub partition_zeta: f64,
    pub partition_xi: f64,
    pub partition_xi_hat: f64,
    pub evenness: f64,
    pub support_violations: usize,
    /// Smallest distance, in units of tau, between the support of
    /// `d/dt xi_k` and that of `zeta_l` for odd k, l.
    pub overlap_distance: f64,
    /// `max |zeta-hat_l zeta_k|` over l != l_k.
    pub cross_overlap_max: f64,
    /// Fitted `C_j = max |d^j zeta_k| tau^j` for j = 0..=deriv_cap.
    pub zeta_deriv_consts: Vec<f64>,
    /// Fitted `C_j = max |d^j zeta-hat| tau'^j`.
    pub zeta_hat_deriv_consts: Vec<f64>,
    pub xi_hat_deriv_consts: Vec<f64>,
    pub samples: usize,
}

impl FamilyReport {
    pub fn passed(&self) -> bool {
        self.partition_zeta < 1e-10
            && self.partition_xi < 1e-10
            && self.partition_xi_hat < 1e-10
            && self.support_violations == 0
            && self.overlap_distance >= 1.0 / 12.0 - 1e-12
            && self.cross_overlap_max == 0.0
    }
}

/// Checks all family properties at level m on a dense grid covering one
/// `tau''` period (plus margins).
pub fn verify_family(f: &CutoffFamily, schedule: &ParameterSchedule, m: usize, samples: usize) -> FamilyReport {
    let sc = TimeScales::from_schedule(schedule, m);
    verify_scales(f, &sc, samples)
}

pub fn verify_scales(f: &CutoffFamily, sc: &TimeScales, samples: usize) -> FamilyReport {
    let (tau, tp, tpp) = (sc.tau, sc.tau_p, sc.tau_pp);
    let t0 = -0.5 * tpp - 2.0 * tp;
    let t1 = 0.5 * tpp + 2.0 * tp;
    let mut part_z: f64 = 0.0;
    let mut part_x: f64 = 0.0;
    let mut part_xh: f64 = 0.0;
    let mut support = 0usize;
    let mut cross: f64 = 0.0;
    let cap = f.deriv_cap;
    let mut cz = vec![0.0f64; cap + 1];
    let mut czh = vec![0.0f64; cap + 1];
    let mut cxh = vec![0.0f64; cap + 1];
    for i in 0..samples {
        let t = t0 + (t1 - t0) * (i as f64 + 0.5) / samples as f64;
        let s = t / tau;
        let kc = s.round() as i64;
        let mut sz = 0.0;
        for k in kc - 2..=kc + 2 {
            let v = f.zeta_k(tau, k, t, 0);
            if v < 0.0 || v > 1.0 || (v != 0.0 && ((t - k as f64 * tau) / tau).abs() > 2.0 / 3.0) {
                support += 1;
            }
            sz += v;
            let lk = crate::params::slot_index_ratio(sc.ratio_pp, k);
            for l in [lk - 1, lk + 1] {
                cross = cross.max((f.zeta_hat_l(tp, tpp, l, t, 0) * v).abs());
            }
        }
        part_z = part_z.max((sz - 1.0).abs());
        let mut sx = 0.0;
        let ko = if kc.rem_euclid(2) == 1 { kc } else { kc + 1 };
        for k in (ko - 4..=ko + 4).step_by(2) {
            let v = f.xi_k(tau, k, t, 0);
            let u = (t - k as f64 * tau) / tau;
            if v < 0.0 || v > 1.0 || (v != 0.0 && u.abs() > 1.25) || (u.abs() <= 0.75 && v != 1.0) {
                support += 1;
            }
            sx += v;
        }
        part_x = part_x.max((sx - 1.0).abs());
        let lc = (t / tpp).round() as i64;
        let mut sxh = 0.0;
        for l in lc - 2..=lc + 2 {
            sxh += f.xi_hat_l(tp, tpp, l, t, 0);
            let zh = f.zeta_hat_l(tp, tpp, l, t, 0);
            let lf = l as f64;
            let inside_plateau = t >= (lf - 0.5) * tpp + 2.0 * tp && t <= (lf + 0.5) * tpp - 2.0 * tp;
            let outside_support = t < (lf - 0.5) * tpp + tp || t > (lf + 0.5) * tpp - tp;
            if (inside_plateau && zh != 1.0) || (outside_support && zh != 0.0) {
                support += 1;
            }
            if zh > 0.0 && f.xi_hat_l(tp, tpp, l, t, 0) != 1.0 {
                support += 1;
            }
        }
        part_xh = part_xh.max((sxh - 1.0).abs());
        for j in 0..=cap {
            cz[j] = cz[j].max(f.zeta_k(tau, kc, t, j).abs() * tau.powi(j as i32));
            czh[j] = czh[j].max(f.zeta_hat_l(tp, tpp, lc, t, j).abs() * tp.powi(j as i32));
            cxh[j] = cxh[j].max(f.xi_hat_l(tp, tpp, lc, t, j).abs() * tp.powi(j as i32));
        }
    }
    let mut ev: f64 = 0.0;
    for i in 0..2000 {
        let s = -0.7 + 1.4 * i as f64 / 1999.0;
        ev = ev.max((f.zeta(s, 0) - f.zeta(-s, 0)).abs());
    }
    // supp d/dt xi_k = [k-5/4, k-3/4] u [k+3/4, k+5/4] and
    // supp zeta_l = [l-1/2-sigma, l+1/2+sigma]; for odd k, l the closest pair
    // is l = k (or k +- 2) giving 1/4 - sigma.
    let mut overlap = f64::INFINITY;
    let xi_parts = [(-1.25, -0.75), (0.75, 1.25)];
    for dl in [-4i64, -2, 0, 2, 4] {
        let (zl, zr) = (dl as f64 - 0.5 - f.sigma, dl as f64 + 0.5 + f.sigma);
        for (xl, xr) in xi_parts {
            let d = if xr < zl { zl - xr } else if zr < xl { xl - zr } else { 0.0 };
            overlap = overlap.min(d);
        }
    }
    FamilyReport {
        partition_zeta: part_z,
        partition_xi: part_x,
        partition_xi_hat: part_xh,
        evenness: ev,
        support_violations: support,
        overlap_distance: overlap,
        cross_overlap_max: cross,
        zeta_deriv_consts: cz,
        zeta_hat_deriv_consts: czh,
        xi_hat_deriv_consts: cxh,
        samples,
    }
}

/// Slot index helper re-exported for callers that only hold a schedule.
pub fn l_of_k(schedule: &ParameterSchedule, m: usize, k: i64) -> i64 {
    slot_index(schedule, m, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_antisymmetric() {
        for &p in &[0.3, 1.0, 4.0] {
            for i in 1..50 {
                let y = i as f64 / 50.0;
                assert!((h_value(p, y) + h_value(p, 1.0 - y) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jet_derivative_matches_finite_difference() {
        let p = 0.8;
        let y = 0.37;
        let d = h_derivs(p, y, 3);
        let e = 1e-5;
        let fd1 = (h_value(p, y + e) - h_value(p, y - e)) / (2.0 * e);
        assert!((d[1] - fd1).abs() < 1e-8);
        let fd2 = (h_derivs(p, y + e, 1)[1] - h_derivs(p, y - e, 1)[1]) / (2.0 * e);
        assert!((d[2] - fd2).abs() < 1e-6 * d[2].abs().max(1.0));
        assert_eq!(d[0], h_value(p, y));
    }

    #[test]
    fn infeasible_target_is_reported() {
        match calibrate_profiles(0.8, 1e-6) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn cap_is_enforced() {
        let f = calibrate_profiles(0.9, 1e-6).unwrap();
        let s = crate::params::build_schedule(1.25, 2, 1, crate::params::Mode::Desk).unwrap();
        assert!(matches!(f.eval(Which::Zeta, &s, 1, 0, 0.0, 7), Err(Error::CapExceeded { .. })));
    }
}
