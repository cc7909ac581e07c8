//! Explicit space-time correctors of the level-m shears and the averaged
//! quantities built from them.
//!
//! For an odd slot k the corrector is `chi_k(t, x) = -u_k(x) I_k(t)` with
//!
//! `I_k(t) = int_{-inf}^t g_k(s) exp(c (s - t)) ds`, `c = 4 pi^2 kappa / eps^2`,
//!
//! where `g_k = zeta-hat_{l_k} zeta_k`. The weight solves `I' = g - c I` and is
//! advanced with an exact integrating factor. Everything here depends on a
//! level only through `(a, eps, tau, tau', tau'')`, so single-level
//! experiments can use arbitrary values through [`Level`].

use crate::cutoffs::{CutoffFamily, TimeScales};
use crate::error::{Error, Result};
use crate::field::shear::{Axis, ShearSpec};
use crate::params::ParameterSchedule;
use crate::quad::{gauss_legendre, integrate};
use crate::spectral::Fft2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// Amplitude, length scale and time scales of one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Level {
    pub a: f64,
    pub eps: f64,
    pub scales: TimeScales,
}

impl Level {
    pub fn from_schedule(s: &ParameterSchedule, m: usize) -> Self {
        Level { a: s.a[m], eps: s.eps[m], scales: TimeScales::from_schedule(s, m) }
    }

    /// Damping rate `4 pi^2 kappa / eps^2` of a single mode.
    pub fn damping(&self, kappa: f64) -> f64 {
        4.0 * PI * PI * kappa / (self.eps * self.eps)
    }

    /// `eps^2 / (kappa tau)`.
    pub fn exprat(&self, kappa: f64) -> f64 {
        self.eps * self.eps / (kappa * self.scales.tau)
    }

    /// `a^2 eps^4 / kappa`, the natural scale of the enhancement.
    pub fn enhancement_scale(&self, kappa: f64) -> f64 {
        self.a * self.a * self.eps.powi(4) / kappa
    }

    /// Enhancement of a permanently switched-on shear, `a^2 eps^4 / (2 kappa)`.
    pub fn steady_enhancement(&self, kappa: f64) -> f64 {
        0.5 * self.enhancement_scale(kappa)
    }

    /// `kappa + 9 a^2 eps^4 / (80 kappa)`.
    pub fn reference_kbar(&self, kappa: f64) -> f64 {
        kappa + 9.0 * self.enhancement_scale(kappa) / 80.0
    }

    pub fn shear(&self, k: i64) -> ShearSpec {
        ShearSpec::new(0, k, self.a, self.eps)
    }
}

/// The weight `I_k` tabulated on nodes of its driving support.
#[derive(Clone, Debug)]
pub struct Weight {
    pub k: i64,
    c: f64,
    t0: f64,
    h: f64,
    nodes: Vec<f64>,
    cut: CutoffFamily,
    sc: TimeScales,
    pure: bool,
}

impl Weight {
    pub fn new(cut: &CutoffFamily, sc: &TimeScales, c: f64, k: i64) -> Self {
        Self::build(cut, sc, c, k, false)
    }

    /// The weight driven by `zeta_0` alone, with `zeta-hat` taken as 1.
    pub fn pure(cut: &CutoffFamily, sc: &TimeScales, c: f64) -> Self {
        Self::build(cut, sc, c, 0, true)
    }

    fn drive(&self, t: f64) -> f64 {
        if self.pure {
            self.cut.zeta_k(self.sc.tau, self.k, t, 0)
        } else {
            self.cut.drive(&self.sc, self.k, t)
        }
    }

    fn build(cut: &CutoffFamily, sc: &TimeScales, c: f64, k: i64, pure: bool) -> Self {
        let t0 = (k as f64 - 2.0 / 3.0) * sc.tau;
        let len = 4.0 / 3.0 * sc.tau;
        let n = ((2.0 * c * len).ceil() as usize).clamp(512, 2_000_000);
        let h = len / n as f64;
        let mut w = Weight { k, c, t0, h, nodes: Vec::with_capacity(n + 1), cut: *cut, sc: *sc, pure };
        let mut v = 0.0;
        w.nodes.push(0.0);
        for i in 0..n {
            let a = t0 + i as f64 * h;
            v = v * (-c * h).exp() + w.partial(a, a + h);
            w.nodes.push(v);
        }
        w
    }

    /// `int_a^b g(s) exp(c (s - b)) ds` over a short interval.
    fn partial(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let (xs, ws) = gl8();
        let half = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in xs.iter().zip(ws.iter()) {
            let t = a + half * (1.0 + x);
            s += w * self.drive(t) * (self.c * (t - b)).exp();
        }
        s * half
    }

    fn end(&self) -> f64 {
        self.t0 + self.h * (self.nodes.len() - 1) as f64
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return 0.0;
        }
        let end = self.end();
        if t >= end {
            return self.nodes[self.nodes.len() - 1] * (-self.c * (t - end)).exp();
        }
        let i = (((t - self.t0) / self.h).floor() as usize).min(self.nodes.len() - 2);
        let ti = self.t0 + i as f64 * self.h;
        self.nodes[i] * (-self.c * (t - ti)).exp() + self.partial(ti, t)
    }

    /// `I'(t) = g(t) - c I(t)`.
    pub fn rate(&self, t: f64) -> f64 {
        self.drive(t) - self.c * self.value(t)
    }
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    GL.get_or_init(|| gauss_legendre(8))
}

/// Cache key of the table driven by `zeta_0` alone.
const PURE_KEY: i64 = i64::MIN;

/// Diagonal index of the active entry of slot k, if any.
fn active_entry(k: i64) -> Option<usize> {
    match k.rem_euclid(4) {
        1 => Some(1),
        3 => Some(0),
        _ => None,
    }
}

/// Correctors of one level at one diffusivity, with lazily built weights.
pub struct Correctors {
    pub level: Level,
    pub kappa: f64,
    pub cut: CutoffFamily,
    weights: Mutex<HashMap<i64, Arc<Weight>>>,
}

impl std::fmt::Debug for Correctors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Correctors({:?}, kappa = {})", self.level, self.kappa)
    }
}

impl Correctors {
    pub fn new(cut: &CutoffFamily, level: Level, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Correctors { level, kappa, cut: *cut, weights: Mutex::new(HashMap::new()) })
    }

    pub fn damping(&self) -> f64 {
        self.level.damping(self.kappa)
    }

    pub fn weight(&self, k: i64) -> Arc<Weight> {
        if let Some(w) = self.weights.lock().unwrap().get(&k) {
            return w.clone();
        }
        let w = Arc::new(if k == PURE_KEY {
            Weight::pure(&self.cut, &self.level.scales, self.damping())
        } else {
            Weight::new(&self.cut, &self.level.scales, self.damping(), k)
        });
        let mut map = self.weights.lock().unwrap();
        if map.len() > 4096 {
            map.clear();
        }
        map.insert(k, w.clone());
        w
    }

    /// `I_k(t)`, zero for even k. Slot `k + tau''/tau` carries the drive of
    /// slot k shifted by `tau''`, and slots whose support lies on the plateau
    /// of their `zeta-hat` all share the shape of `zeta`, so few tables are
    /// ever built.
    pub fn weight_value(&self, k: i64, t: f64) -> f64 {
        if k.rem_euclid(2) == 0 {
            return 0.0;
        }
        let sc = self.level.scales;
        let r = sc.ratio_pp;
        let k0 = k.rem_euclid(r);
        let shift = ((k - k0) / r) as f64 * sc.tau_pp;
        let l = crate::params::slot_index_ratio(r, k0);
        let lf = l as f64;
        let plateau = (lf - 0.5) * sc.tau_pp + 2.0 * sc.tau_p <= (k0 as f64 - 2.0 / 3.0) * sc.tau
            && (k0 as f64 + 2.0 / 3.0) * sc.tau <= (lf + 0.5) * sc.tau_pp - 2.0 * sc.tau_p;
        if plateau {
            let pure = self.weight(PURE_KEY);
            pure.value(t - shift - k0 as f64 * sc.tau)
        } else {
            self.weight(k0).value(t - shift)
        }
    }

    /// Corrector row `(chi_{e1}, chi_{e2})` and `grad[i][j] = d_i chi_{e_j}`.
    pub fn eval(&self, k: i64, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let i = self.weight_value(k, t);
        if i == 0.0 {
            return ([0.0; 2], [[0.0; 2]; 2]);
        }
        let (_, u, gu) = self.level.shear(k).eval(x);
        ([-u[0] * i, -u[1] * i], [[-gu[0][0] * i, -gu[0][1] * i], [-gu[1][0] * i, -gu[1][1] * i]])
    }

    /// Odd slots whose drive or weight can be nonzero at t.
    fn odd_slots(&self, t: f64, reach: f64) -> impl Iterator<Item = i64> {
        let s = t / self.level.scales.tau;
        let lo = (s - reach).ceil() as i64;
        let hi = (s + reach).floor() as i64;
        (lo..=hi).filter(|k| k.rem_euclid(2) != 0)
    }

    /// The spatially averaged flux `J(t)`, a diagonal matrix.
    pub fn flux(&self, t: f64) -> [[f64; 2]; 2] {
        let mut j = [[self.kappa, 0.0], [0.0, self.kappa]];
        let pref = 2.0 * PI * PI * self.level.a.powi(2) * self.level.eps.powi(2);
        for k in self.odd_slots(t, 2.0 / 3.0) {
            let g = self.cut.drive(&self.level.scales, k, t);
            if g == 0.0 {
                continue;
            }
            if let Some(e) = active_entry(k) {
                j[e][e] += pref * g * self.weight_value(k, t);
            }
        }
        j
    }

    /// The spatially averaged energy `E(t)` built with the `xi_k` partition.
    pub fn energy(&self, t: f64) -> [[f64; 2]; 2] {
        let tau = self.level.scales.tau;
        let mut sum_xi = 0.0;
        let mut e = [[0.0; 2]; 2];
        let pref = 8.0 * PI.powi(4) * self.level.a.powi(2) * self.kappa;
        for k in self.odd_slots(t, 1.25) {
            let xi = self.cut.xi_k(tau, k, t, 0);
            sum_xi += xi;
            if let Some(a) = active_entry(k) {
                let i = self.weight_value(k, t);
                e[a][a] += xi * xi * pref * i * i;
            }
        }
        let base = self.kappa * sum_xi * sum_xi;
        e[0][0] += base;
        e[1][1] += base;
        e
    }

    /// Time averages of `J_11` and `J_22` over the full `4 tau''` period.
    pub fn kbar(&self, quad_tol: f64) -> Result<KbarReport> {
        let lv = self.level;
        let sc = lv.scales;
        let scale = lv.enhancement_scale(self.kappa);
        let period = 4.0 * sc.tau_pp;
        let mut acc = [0.0; 2];
        if lv.a != 0.0 {
            let pieces = (4 * sc.ratio_pp) as usize;
            let tol = quad_tol * scale * sc.tau;
            for j in 0..pieces as i64 {
                let (a, b) = ((j as f64 - 0.5) * sc.tau, (j as f64 + 0.5) * sc.tau);
                for (e, slot) in acc.iter_mut().enumerate() {
                    let f = |t: f64| self.flux(t)[e][e] - self.kappa;
                    *slot += integrate(f, a, b, tol, 2000)?;
                }
            }
        }
        let k11 = self.kappa + acc[0] / period;
        let k22 = self.kappa + acc[1] / period;
        let kbar = 0.5 * (k11 + k22);
        let reference = lv.reference_kbar(self.kappa);
        let exprat = lv.exprat(self.kappa);
        let ramp = sc.tau_p / sc.tau_pp;
        Ok(KbarReport {
            kappa: self.kappa,
            kbar,
            k11,
            k22,
            off_diagonal: 0.0,
            reference,
            deviation: kbar - reference,
            envelope: scale * (exprat + ramp),
            exprat,
            ramp_fraction: ramp,
        })
    }

    /// Builds the decomposition `J ~ kappa I + sum_n L_n j_n` and its averaged
    /// version `K`, with time correctors of the `j_n`.
    pub fn decomposition(&self, trunc: usize, samples: usize, q_orders: usize) -> Result<Decomposition> {
        let lv = self.level;
        let sc = lv.scales;
        let exprat = lv.exprat(self.kappa);
        if exprat > 0.5 {
            return Err(Error::Condition(format!("eps^2/(kappa tau) = {exprat:.4} > 1/2")));
        }
        if trunc == 0 || trunc > crate::jet::MAX_ORDER {
            return Err(Error::Domain(format!("truncation {trunc} outside 1..={}", crate::jet::MAX_ORDER)));
        }
        let c = self.damping();
        let pref = 2.0 * PI * PI * lv.a.powi(2) * lv.eps.powi(2);
        let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
        // <j_n>: one active slot per axis every 4 tau
        let mut jbar = Vec::with_capacity(trunc);
        for n in 0..trunc {
            let int = integrate(|s| self.cut.zeta(s, 0) * self.cut.zeta(s, n), -2.0 / 3.0, 2.0 / 3.0, 1e-11, 20000)?;
            let avg = int * sc.tau.powi(1 - n as i32) / (4.0 * sc.tau);
            jbar.push(pref / fact(n) * c.powi(-(n as i32)) * avg);
        }
        let jn = |n: usize, t: f64| -> [f64; 2] {
            let mut out = [0.0; 2];
            for k in sc.active_slots(t) {
                if let Some(e) = active_entry(k) {
                    let z = self.cut.zeta_k(sc.tau, k, t, 0);
                    if z != 0.0 {
                        out[e] += z * self.cut.zeta_k(sc.tau, k, t, n);
                    }
                }
            }
            let s = pref / fact(n) * c.powi(-(n as i32));
            [out[0] * s, out[1] * s]
        };
        let ln = |n: usize, t: f64| -> Result<f64> { self.l_n(n, t) };

        let period = 4.0 * sc.tau_pp;
        let mut rep = Decomposition {
            trunc,
            exprat,
            jbar: jbar.clone(),
            max_j_minus_jhat: 0.0,
            jhat_bound: lv.enhancement_scale(self.kappa) * exprat.powi(trunc as i32),
            max_kbar_k_gap: 0.0,
            samples: Vec::with_capacity(samples),
            q: Vec::new(),
        };
        let mut k_avg = 0.0;
        for i in 0..samples {
            let t = (i as f64 + 0.5) / samples as f64 * period;
            let j = self.flux(t);
            let mut jhat = [self.kappa; 2];
            let mut kk = self.kappa;
            for n in 0..trunc {
                let l = ln(n, t)?;
                let v = jn(n, t);
                jhat[0] += l * v[0];
                jhat[1] += l * v[1];
                kk += jbar[n] * l;
            }
            k_avg += kk / samples as f64;
            let gap = (j[0][0] - jhat[0]).abs().max((j[1][1] - jhat[1]).abs());
            rep.max_j_minus_jhat = rep.max_j_minus_jhat.max(gap);
            rep.samples.push(DecompSample { t, j11: j[0][0], j22: j[1][1], jhat11: jhat[0], jhat22: jhat[1], k: kk });
        }
        let kbar_from_j: f64 =
            rep.samples.iter().map(|s| 0.5 * (s.j11 + s.j22)).sum::<f64>() / samples.max(1) as f64;
        rep.max_kbar_k_gap = (k_avg - kbar_from_j).abs();

        // time correctors of the e2 component over its period 4 tau
        let m = 2048;
        let per = 4.0 * sc.tau;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        for n in 0..trunc {
            let mut buf: Vec<Complex64> = (0..m)
                .map(|i| Complex64::new(jn(n, i as f64 / m as f64 * per)[1], 0.0))
                .collect();
            fwd.process(&mut buf);
            buf[0] = Complex64::new(0.0, 0.0);
            for r in 0..=q_orders {
                if r > 0 {
                    for (i, z) in buf.iter_mut().enumerate().skip(1) {
                        let kf = if i <= m / 2 { i as f64 } else { i as f64 - m as f64 };
                        let w = 2.0 * PI * kf / per;
                        *z = if i == m / 2 { Complex64::new(0.0, 0.0) } else { -*z / Complex64::new(0.0, w) };
                    }
                }
                let mut vals = buf.clone();
                inv.process(&mut vals);
                let values: Vec<f64> = vals.iter().map(|z| z.re / m as f64).collect();
                let mean = values.iter().sum::<f64>() / m as f64;
                let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                rep.q.push(TimeCorrector { n, r, period: per, mean, sup, values });
            }
        }
        Ok(rep)
    }

    /// `L_n(t) = sum_l zeta-hat_l(t) int_{-inf}^t zeta-hat_l(s) (c(s-t))^n e^{c(s-t)} ds`.
    pub fn l_n(&self, n: usize, t: f64) -> Result<f64> {
        let sc = self.level.scales;
        let c = self.damping();
        let l = (t / sc.tau_pp).round() as i64;
        let mut total = 0.0;
        for l in [l - 1, l, l + 1] {
            let zt = self.cut.zeta_hat_l(sc.tau_p, sc.tau_pp, l, t, 0);
            if zt == 0.0 {
                continue;
            }
            let lo = ((l as f64 - 0.5) * sc.tau_pp + sc.tau_p).max(t - 80.0 / c);
            if lo >= t {
                continue;
            }
            let f = |s: f64| {
                let x = c * (s - t);
                self.cut.zeta_hat_l(sc.tau_p, sc.tau_pp, l, s, 0) * x.powi(n as i32) * x.exp()
            };
            let scale = fact_f(n) / c;
            total += zt * integrate(f, lo, t, 1e-12 * scale, 4000)?;
        }
        Ok(total)
    }
}

fn fact_f(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct KbarReport {
    pub kappa: f64,
    /// `(K_11 + K_22) / 2`.
    pub kbar: f64,
    pub k11: f64,
    pub k22: f64,
    pub off_diagonal: f64,
    /// `kappa + 9 a^2 eps^4 / (80 kappa)`.
    pub reference: f64,
    pub deviation: f64,
    /// `(eps^2/(kappa tau) + tau'/tau'') a^2 eps^4 / kappa`, the error envelope
    /// with unit constants.
    pub envelope: f64,
    pub exprat: f64,
    pub ramp_fraction: f64,
}

impl KbarReport {
    /// The deviation measured in units of the envelope.
    pub fn envelope_ratio(&self) -> f64 {
        if self.envelope == 0.0 {
            0.0
        } else {
            self.deviation.abs() / self.envelope
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompSample {
    pub t: f64,
    pub j11: f64,
    pub j22: f64,
    pub jhat11: f64,
    pub jhat22: f64,
    pub k: f64,
}

/// A time corrector `q_{n,r}` of the e2 component of `j_n`, sampled over one
/// period.
#[derive(Clone, Debug, Serialize)]
pub struct TimeCorrector {
    pub n: usize,
    pub r: usize,
    pub period: f64,
    pub mean: f64,
    pub sup: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub trunc: usize,
    pub exprat: f64,
    /// Time averages of the diagonal entries of `j_n`.
    pub jbar: Vec<f64>,
    pub max_j_minus_jhat: f64,
    /// `(a^2 eps^4 / kappa) (eps^2/(kappa tau))^trunc`.
    pub jhat_bound: f64,
    /// `|<K> - <J>|` over the samples.
    pub max_kbar_k_gap: f64,
    pub samples: Vec<DecompSample>,
    pub q: Vec<TimeCorrector>,
}

pub fn corrector_eval(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    k: i64,
    kappa: f64,
    t: f64,
    x: [f64; 2],
) -> Result<([f64; 2], [[f64; 2]; 2])> {
    Ok(Correctors::new(cutoffs, Level::from_schedule(schedule, m), kappa)?.eval(k, t, x))
}

/// Largest RMS residual of the corrector equation
/// `d_t chi - kappa Lap chi + g u.(e + grad chi) = 0` over `t_samples` times
/// in the slot support, normalized by `a eps`.
pub fn corrector_residual_level(
    cutoffs: &CutoffFamily,
    level: Level,
    k: i64,
    kappa: f64,
    grid_n: usize,
    t_samples: usize,
) -> Result<f64> {
    let eps_inv = (1.0 / level.eps).round() as usize;
    if grid_n < 4 * eps_inv {
        return Err(Error::Resolution(format!("grid {grid_n} does not resolve eps = 1/{eps_inv}")));
    }
    if k.rem_euclid(2) == 0 {
        return Ok(0.0);
    }
    let cor = Correctors::new(cutoffs, level, kappa)?;
    let w = cor.weight(k);
    let fft = Fft2::new(grid_n);
    let spec = level.shear(k);
    let n = grid_n;
    let mut worst: f64 = 0.0;
    let tau = level.scales.tau;
    for s in 0..t_samples {
        let t = (k as f64 - 2.0 / 3.0 + 4.0 / 3.0 * (s as f64 + 0.5) / t_samples as f64) * tau;
        let g = cutoffs.drive(&level.scales, k, t);
        let (iv, di) = (w.value(t), w.rate(t));
        let mut sq = 0.0;
        for e in 0..2 {
            let mut chi = vec![0.0; n * n];
            let mut u = vec![[0.0; 2]; n * n];
            for p in 0..n * n {
                let x = [(p / n) as f64 / n as f64, (p % n) as f64 / n as f64];
                let (_, up, _) = spec.eval(x);
                u[p] = up;
                chi[p] = -up[e] * iv;
            }
            let d0 = fft.derivative(&chi, 0);
            let d1 = fft.derivative(&chi, 1);
            let d00 = fft.derivative(&d0, 0);
            let d11 = fft.derivative(&d1, 1);
            for p in 0..n * n {
                let dt = -u[p][e] * di;
                let lap = d00[p] + d11[p];
                let mut adv = u[p][e];
                adv += u[p][0] * d0[p] + u[p][1] * d1[p];
                let r = dt - kappa * lap + g * adv;
                sq += r * r;
            }
        }
        worst = worst.max((sq / (n * n) as f64).sqrt());
    }
    Ok(worst / (level.a * level.eps))
}

pub fn corrector_residual(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    k: i64,
    kappa: f64,
    grid_n: usize,
    t_samples: usize,
) -> Result<f64> {
    corrector_residual_level(cutoffs, Level::from_schedule(schedule, m), k, kappa, grid_n, t_samples)
}

pub fn flux_j(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    kappa: f64,
    t: f64,
) -> Result<[[f64; 2]; 2]> {
    Ok(Correctors::new(cutoffs, Level::from_schedule(schedule, m), kappa)?.flux(t))
}

pub fn homogenized_kbar(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    kappa: f64,
    quad_tol: f64,
) -> Result<KbarReport> {
    Correctors::new(cutoffs, Level::from_schedule(schedule, m), kappa)?.kbar(quad_tol)
}

pub fn k_decomposition(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    kappa: f64,
    trunc: usize,
) -> Result<Decomposition> {
    let trunc = trunc.min(schedule.truncation()).max(1);
    Correctors::new(cutoffs, Level::from_schedule(schedule, m), kappa)?.decomposition(trunc, 512, 3)
}

pub fn energy_e(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    m: usize,
    kappa: f64,
    t: f64,
) -> Result<[[f64; 2]; 2]> {
    Ok(Correctors::new(cutoffs, Level::from_schedule(schedule, m), kappa)?.energy(t))
}

/// Effective matrix `kappa (I + <grad chi (x) grad chi>)` of a single steady
/// shear with a mean drift, from the steady corrector equation
/// `-kappa Lap chi_e + (u + v).grad chi_e = -(u + v).e` restricted to the
/// two Fourier modes of the shear. The constant part of the right side is
/// mean transport and does not enter the corrector.
pub fn cell_problem_oracle_axis(a: f64, eps: f64, kappa: f64, drift: [f64; 2], axis: Axis) -> Result<[[f64; 2]; 2]> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    let kl = 2.0 * PI / eps;
    let w = 2.0 * PI * a * eps;
    // shear along e_s varying in x_v
    let (v, s) = match axis {
        Axis::X1 => (0, 1),
        Axis::X2 => (1, 0),
    };
    let mut grads = [[0.0f64; 2]; 2];
    let mut out = [[kappa, 0.0], [0.0, kappa]];
    // u_s = sign * w cos(kl x_v) = sign * w/2 (e^{i kl x} + e^{-i kl x})
    let sign = if axis == Axis::X1 { 1.0 } else { -1.0 };
    for e in 0..2 {
        let rhs_amp = if e == s { -sign * w * 0.5 } else { 0.0 };
        // mode +kl: (kappa kl^2 + i v_v kl) C = rhs
        let den = Complex64::new(kappa * kl * kl, drift[v] * kl);
        let c_plus = Complex64::new(rhs_amp, 0.0) / den;
        // d_v chi = 2 Re(i kl C e^{i kl x}); mean square = 2 |kl C|^2
        grads[e][v] = (2.0 * (kl * c_plus).norm_sqr()).sqrt();
    }
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += kappa * grads[i][v] * grads[j][v];
        }
    }
    Ok(out)
}

/// The oracle for a shear varying in `x1` (velocity along `e2`).
pub fn cell_problem_oracle(a: f64, eps: f64, kappa: f64, drift: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    cell_problem_oracle_axis(a, eps, kappa, drift, Axis::X1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoffs::calibrate_profiles;

    fn fam() -> CutoffFamily {
        calibrate_profiles(0.9, 1e-6).unwrap()
    }

    #[test]
    fn weight_matches_quadrature() {
        let cut = fam();
        let lv = Level { a: 1.0, eps: 0.1, scales: TimeScales::with_ratio(1.0, 5) };
        let cor = Correctors::new(&cut, lv, 0.001).unwrap();
        let c = cor.damping();
        for &t in &[0.7, 1.0, 1.3, 1.6] {
            let direct = integrate(|s| cut.drive(&lv.scales, 1, s) * (c * (s - t)).exp(), 1.0 / 3.0, t, 1e-13, 4000).unwrap();
            assert!((cor.weight_value(1, t) - direct).abs() < 1e-10, "{t}");
        }
        assert_eq!(cor.weight_value(1, 0.2), 0.0);
        assert_eq!(cor.weight_value(2, 1.0), 0.0);
    }

    #[test]
    fn oracle_examples() {
        let k = cell_problem_oracle(1.0, 0.5, 0.1, [0.0, 0.0]).unwrap();
        assert!((k[1][1] - (0.1 + 0.3125)).abs() < 1e-12);
        assert!((k[0][0] - 0.1).abs() < 1e-15 && k[0][1] == 0.0);
        let eps = 2.0 * PI;
        let a = 1.0 / (2.0 * PI * eps);
        let k = cell_problem_oracle(a, eps, 1.0, [10.0, 0.0]).unwrap();
        assert!((k[1][1] - 1.0 - 1.0 / 202.0).abs() < 1e-12);
        let k = cell_problem_oracle_axis(1.0, 0.5, 0.1, [0.0, 0.0], Axis::X2).unwrap();
        assert!((k[0][0] - 0.4125).abs() < 1e-12);
    }

    fn desk_level(tau: f64) -> Level {
        Level { a: 1.0, eps: 0.1, scales: TimeScales::with_ratio(tau, 5) }
    }

    #[test]
    fn steady_plateau_flux_and_energy() {
        let cut = fam();
        let lv = desk_level(100.0);
        let kappa = 0.01;
        let cor = Correctors::new(&cut, lv, kappa).unwrap();
        let t = lv.scales.tau;
        let j = cor.flux(t);
        let steady = lv.steady_enhancement(kappa);
        assert!((j[1][1] - kappa - steady).abs() < 1e-10 * steady, "{:?}", j);
        assert_eq!(j[0][0], kappa);
        let e = cor.energy(t);
        assert!((e[1][1] - kappa - steady).abs() < 1e-8 * steady, "{:?}", e);
        // both independent routes agree
        let o = cell_problem_oracle(lv.a, lv.eps, kappa, [0.0, 0.0]).unwrap();
        assert!((o[1][1] - j[1][1]).abs() < 1e-10 * j[1][1]);
        // the corrector at the plateau is the steady one
        let (chi, _) = cor.eval(1, t, [0.0, 0.3]);
        let want = lv.a * lv.eps.powi(3) / (2.0 * PI * kappa);
        assert!((chi[1].abs() - want).abs() < 1e-10 * want);
        // an even slot after the odd one has decayed
        let j = cor.flux(2.0 * t);
        assert!((j[0][0] - kappa).abs() < 1e-12 && (j[1][1] - kappa).abs() < 1e-12);
    }

    #[test]
    fn kbar_desk_example_within_envelope() {
        let cut = fam();
        let lv = desk_level(100.0);
        let r = Correctors::new(&cut, lv, 0.01).unwrap().kbar(1e-8).unwrap();
        assert!((r.reference - 0.011125).abs() < 1e-15);
        assert!(r.deviation.abs() <= r.envelope, "{r:?}");
        // a longer switching window leaves only the ramps of zeta-hat
        let long = Level { scales: TimeScales::with_ratio(100.0, 41), ..lv };
        let r41 = Correctors::new(&cut, long, 0.01).unwrap().kbar(1e-8).unwrap();
        assert!(r41.deviation.abs() < 0.1 * r41.reference, "{r41:?}");
        assert!((r.k11 - r.k22).abs() < 1e-9 * r.kbar, "{r:?}");
        let zero = Level { a: 0.0, ..lv };
        assert_eq!(Correctors::new(&cut, zero, 0.01).unwrap().kbar(1e-8).unwrap().kbar, 0.01);
    }

    #[test]
    fn kbar_decreases_on_enhancement_branch() {
        let cut = fam();
        let lv = Level { scales: TimeScales::with_ratio(1000.0, 41), ..desk_level(1.0) };
        let top = (9.0f64 / 80.0).sqrt() * lv.a * lv.eps * lv.eps;
        let mut prev = f64::INFINITY;
        for i in 0..6 {
            let kappa = top * (0.3 + 0.12 * i as f64);
            let k = Correctors::new(&cut, lv, kappa).unwrap().kbar(1e-8).unwrap().kbar;
            assert!(k < prev, "{kappa} {k} {prev}");
            prev = k;
        }
    }

    #[test]
    fn weight_agrees_with_implicit_euler_march() {
        let cut = fam();
        let lv = desk_level(1.0);
        let kappa = 0.002;
        let cor = Correctors::new(&cut, lv, kappa).unwrap();
        let c = cor.damping();
        let (t0, t1) = (1.0 / 3.0, 1.8);
        let n = 400_000;
        let dt = (t1 - t0) / n as f64;
        let mut v = 0.0;
        for i in 1..=n {
            let t = t0 + i as f64 * dt;
            v = (v + dt * cut.drive(&lv.scales, 1, t)) / (1.0 + c * dt);
        }
        let w = cor.weight_value(1, t1);
        assert!((v - w).abs() < 1e-4 * w.abs().max(1e-3), "{v} {w}");
    }

    #[test]
    fn corrector_equation_residual_is_tiny() {
        let cut = fam();
        let lv = Level { a: 2.0, eps: 0.25, scales: TimeScales::with_ratio(0.05, 5) };
        for k in [1, 3] {
            let r = corrector_residual_level(&cut, lv, k, 0.01, 16, 7).unwrap();
            assert!(r < 1e-8, "{k} {r}");
        }
        assert_eq!(corrector_residual_level(&cut, lv, 2, 0.01, 16, 3).unwrap(), 0.0);
        assert!(corrector_residual_level(&cut, lv, 1, 0.01, 8, 3).is_err());
    }

    #[test]
    fn orthogonality_of_shear_and_corrector() {
        let cut = fam();
        let lv = desk_level(1.0);
        let cor = Correctors::new(&cut, lv, 0.003).unwrap();
        for k in [1i64, 3] {
            for p in 0..20 {
                let x = [0.05 * p as f64, 0.37 + 0.02 * p as f64];
                let (_, u, _) = lv.shear(k).eval(x);
                let (_, g) = cor.eval(k, k as f64, x);
                for e in 0..2 {
                    assert_eq!(u[0] * g[0][e] + u[1] * g[1][e], 0.0);
                }
            }
        }
    }

    #[test]
    fn decomposition_tracks_flux() {
        let cut = fam();
        let lv = desk_level(100.0);
        let cor = Correctors::new(&cut, lv, 0.01).unwrap();
        let d1 = cor.decomposition(1, 256, 2).unwrap();
        let scale = lv.enhancement_scale(0.01);
        assert!(d1.max_j_minus_jhat <= 10.0 * scale * d1.exprat, "{} {}", d1.max_j_minus_jhat, scale);
        let d4 = cor.decomposition(4, 256, 3).unwrap();
        assert!(d4.max_j_minus_jhat < d1.max_j_minus_jhat);
        for q in &d4.q {
            if q.r >= 1 {
                assert!(q.mean.abs() < 1e-10 * (1.0 + q.sup), "{} {} {}", q.n, q.r, q.mean);
            }
        }
        let tight = Level { scales: TimeScales::with_ratio(1e-3, 5), ..lv };
        assert!(matches!(
            Correctors::new(&cut, tight, 0.01).unwrap().decomposition(2, 8, 1),
            Err(Error::Condition(_))
        ));
    }
}
