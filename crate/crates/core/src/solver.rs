//! Pseudo-spectral solver for `d_t theta + b . grad theta = kappa Laplacian theta`
//! on the unit torus.
//!
//! Each step is a Strang splitting: half a step of exact diffusion, a full
//! RK4 advection step, half a step of exact diffusion. Advection uses the
//! skew-symmetric form `(b . grad theta + div(b theta)) / 2` with 2/3
//! dealiasing, which conserves the discrete L2 norm up to the RK4 error for
//! any sampled velocity. The variance removed by each diffusion substep is
//! accumulated mode by mode, so the cumulative dissipation is exact for the
//! split scheme.

use crate::correctors::Correctors;
use crate::error::{Error, Result};
use crate::field::shear::ShearSpec;
use crate::field::FieldM;
use crate::spectral::Fft2;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// A velocity that can be sampled on a uniform grid.
pub trait VelocityField: Sync {
    /// Fills `u1`, `u2` (row-major, `n x n`) at time t.
    fn sample(&self, t: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()>;
    /// An upper bound on `sup |b|`.
    fn speed_bound(&self) -> f64;
    /// Smallest length scale the grid has to resolve.
    fn finest_scale(&self) -> f64 {
        1.0
    }
    fn is_steady(&self) -> bool {
        false
    }
    fn is_zero(&self) -> bool {
        false
    }
    fn describe(&self) -> String;
}

pub struct ZeroVelocity;

impl VelocityField for ZeroVelocity {
    fn sample(&self, _t: f64, _n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()> {
        u1.fill(0.0);
        u2.fill(0.0);
        Ok(())
    }
    fn speed_bound(&self) -> f64 {
        0.0
    }
    fn is_steady(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn describe(&self) -> String {
        "zero".into()
    }
}

fn fill_shear(spec: &ShearSpec, scale: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let (_, u, _) = spec.eval([i as f64 / n as f64, j as f64 / n as f64]);
            u1[i * n + j] = scale * u[0];
            u2[i * n + j] = scale * u[1];
        }
    }
}

/// The steady shear with stream `a eps^2 sin(2 pi x_1 / eps)`, so the velocity
/// points along `e2`; `along_e1` rotates it.
pub struct SteadyShear {
    pub a: f64,
    pub eps: f64,
    pub along_e1: bool,
}

impl SteadyShear {
    fn spec(&self) -> ShearSpec {
        ShearSpec::new(1, if self.along_e1 { 3 } else { 1 }, self.a, self.eps)
    }
}

impl VelocityField for SteadyShear {
    fn sample(&self, _t: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()> {
        fill_shear(&self.spec(), 1.0, n, u1, u2);
        Ok(())
    }
    fn speed_bound(&self) -> f64 {
        self.spec().speed()
    }
    fn finest_scale(&self) -> f64 {
        self.eps
    }
    fn is_steady(&self) -> bool {
        true
    }
    fn describe(&self) -> String {
        format!("steady shear a={} eps={} along_e1={}", self.a, self.eps, self.along_e1)
    }
}

/// A shear along `e2` on `[2 j tau, (2 j + 1) tau)` and along `e1` otherwise.
pub struct AlternatingShear {
    pub a: f64,
    pub eps: f64,
    pub tau: f64,
}

impl AlternatingShear {
    fn phase(&self, t: f64) -> bool {
        (t / self.tau).floor().rem_euclid(2.0) == 0.0
    }
}

impl VelocityField for AlternatingShear {
    fn sample(&self, t: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()> {
        let k = if self.phase(t) { 1 } else { 3 };
        fill_shear(&ShearSpec::new(1, k, self.a, self.eps), 1.0, n, u1, u2);
        Ok(())
    }
    fn speed_bound(&self) -> f64 {
        2.0 * PI * self.a * self.eps
    }
    fn finest_scale(&self) -> f64 {
        self.eps
    }
    fn describe(&self) -> String {
        format!("alternating shears a={} eps={} tau={}", self.a, self.eps, self.tau)
    }
}

impl VelocityField for FieldM {
    fn sample(&self, t: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()> {
        FieldM::sample(self, t, n, u1, u2)
    }
    fn speed_bound(&self) -> f64 {
        FieldM::speed_bound(self)
    }
    fn finest_scale(&self) -> f64 {
        self.finest_eps()
    }
    fn is_zero(&self) -> bool {
        (1..=self.depth).all(|m| self.disabled[m] || self.amp_scale[m] == 0.0)
    }
    fn describe(&self) -> String {
        let off: Vec<usize> = (1..=self.depth).filter(|&m| self.disabled[m]).collect();
        format!(
            "field beta={} lambda={} depth={} disabled={:?}",
            self.schedule.beta, self.schedule.lambda, self.depth, off
        )
    }
}

/// Mean-zero scalar stored as its dealiased half-plane spectrum.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid_n: usize,
    pub coeffs: Vec<Complex64>,
    pub time: f64,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField { grid_n: n, coeffs: vec![Complex64::new(0.0, 0.0); n * (n / 2 + 1)], time: 0.0 }
    }

    /// Transforms grid values; fails if the mean is not zero.
    pub fn from_physical(n: usize, values: &[f64]) -> Result<Self> {
        let fft = Fft2::new(n);
        let mut f = ScalarField::zeros(n);
        fft.forward(values, &mut f.coeffs);
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        if f.coeffs[0].norm() > 1e-12 * scale {
            return Err(Error::Domain(format!("scalar has nonzero mean {}", f.coeffs[0].re)));
        }
        f.coeffs[0] = Complex64::new(0.0, 0.0);
        for (i, z) in f.coeffs.iter_mut().enumerate() {
            if !fft.keep(i) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Ok(f)
    }

    pub fn from_fn(n: usize, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = f([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        Self::from_physical(n, &v)
    }

    /// `sin(2 pi x_1) + sin(2 pi x_2)`.
    pub fn default_initial(n: usize) -> Self {
        Self::from_fn(n, |x| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).sin()).expect("mean-zero datum")
    }

    pub fn to_physical(&self) -> Vec<f64> {
        let fft = Fft2::new(self.grid_n);
        self.to_physical_with(&fft)
    }

    fn to_physical_with(&self, fft: &Fft2) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        let mut out = vec![0.0; self.grid_n * self.grid_n];
        fft.inverse(&mut c, &mut out);
        out
    }

    fn weight(&self, idx: usize) -> f64 {
        let nh = self.grid_n / 2 + 1;
        let j = idx % nh;
        if j == 0 || j == nh - 1 {
            1.0
        } else {
            2.0
        }
    }

    fn k2(&self, idx: usize) -> f64 {
        let nh = self.grid_n / 2 + 1;
        let k1 = crate::spectral::wavenumber(idx / nh, self.grid_n) as f64;
        let k2 = (idx % nh) as f64;
        k1 * k1 + k2 * k2
    }

    /// `||theta||_2^2`.
    pub fn l2sq(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, z)| self.weight(i) * z.norm_sqr()).sum()
    }

    /// `||grad theta||_2^2`.
    pub fn grad_l2sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, z)| self.weight(i) * 4.0 * PI * PI * self.k2(i) * z.norm_sqr())
            .sum()
    }

    /// The coefficient of `exp(2 pi i k . x)`, using conjugate symmetry for
    /// `k_2 < 0`.
    pub fn coefficient(&self, k: (i64, i64)) -> Complex64 {
        let n = self.grid_n as i64;
        let nh = self.grid_n / 2 + 1;
        let (k1, k2, conj) = if k.1 < 0 { (-k.0, -k.1, true) } else { (k.0, k.1, false) };
        if k1.abs() > n / 2 || k2 > n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        let i = k1.rem_euclid(n) as usize;
        let z = self.coeffs[i * nh + k2 as usize];
        if conj {
            z.conj()
        } else {
            z
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|z| *z *= s);
        f
    }

    /// `||self - other||_2`.
    pub fn distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid_n != other.grid_n {
            return Err(Error::Domain("grid mismatch".into()));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| self.weight(i) * (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// `||grad(self - other)||_2`.
    pub fn grad_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid_n != other.grid_n {
            return Err(Error::Domain("grid mismatch".into()));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| self.weight(i) * 4.0 * PI * PI * self.k2(i) * (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunDiagnostics {
    pub kappa: f64,
    pub dt: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    pub l2sq: Vec<f64>,
    /// `2 kappa int_0^t ||grad theta||^2`.
    pub cum_dissipation: Vec<f64>,
    /// `|‖theta_0‖^2 - ‖theta(t)‖^2 - cum_dissipation| / ‖theta_0‖^2`.
    pub balance_residual: Vec<f64>,
    /// Largest relative change of `||theta||^2` over one advection step.
    pub max_advection_drift: f64,
    /// Largest `dt sup|b| n` seen.
    pub max_cfl: f64,
    pub velocity_source: String,
    /// Tracked Fourier coefficients at each output time.
    pub probes: Vec<(i64, i64)>,
    #[serde(skip)]
    pub probe_values: Vec<Vec<Complex64>>,
    #[serde(skip)]
    pub trajectory: Vec<ScalarField>,
}

impl RunDiagnostics {
    pub fn max_balance_residual(&self) -> f64 {
        self.balance_residual.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub dt: f64,
    /// Record diagnostics every this many steps (and at the end).
    pub output_every: usize,
    /// Largest admissible `dt sup|b| n`.
    pub cfl: f64,
    pub probes: Vec<(i64, i64)>,
    pub keep_trajectory: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { dt: 1e-3, output_every: 10, cfl: 0.5, probes: vec![], keep_trajectory: false }
    }
}

struct Workspace {
    fft: Fft2,
    n: usize,
    d1: Vec<Complex64>,
    d2: Vec<Complex64>,
    keep: Vec<bool>,
    k2: Vec<f64>,
    weight: Vec<f64>,
    cbuf: Vec<Complex64>,
    th: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    adv: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    s0: Vec<Complex64>,
    s1: Vec<Complex64>,
    s2: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let fft = Fft2::new(n);
        let len = fft.spectrum_len();
        let mut d1 = Vec::with_capacity(len);
        let mut d2 = Vec::with_capacity(len);
        let mut keep = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut weight = Vec::with_capacity(len);
        for i in 0..len {
            let (a, b) = fft.deriv_symbols(i);
            d1.push(a);
            d2.push(b);
            keep.push(fft.keep(i) && i != 0);
            let (x, y) = fft.k_of(i);
            k2.push((x * x + y * y) as f64);
            weight.push(fft.weight(i));
        }
        let z = vec![Complex64::new(0.0, 0.0); len];
        let r = vec![0.0; n * n];
        Workspace {
            fft,
            n,
            d1,
            d2,
            keep,
            k2,
            weight,
            cbuf: z.clone(),
            th: r.clone(),
            g1: r.clone(),
            g2: r.clone(),
            adv: r.clone(),
            f1: r.clone(),
            f2: r,
            s0: z.clone(),
            s1: z.clone(),
            s2: z,
        }
    }

    fn energy(&self, c: &[Complex64]) -> f64 {
        c.iter().zip(&self.weight).map(|(z, w)| w * z.norm_sqr()).sum()
    }

    /// `out = -P (b . grad theta + div(b theta)) / 2`.
    fn rhs(&mut self, th: &[Complex64], u1: &[f64], u2: &[f64], out: &mut [Complex64]) {
        self.cbuf.copy_from_slice(th);
        self.fft.inverse_dealiased(&mut self.cbuf, &mut self.th);
        for (c, (z, d)) in self.cbuf.iter_mut().zip(th.iter().zip(&self.d1)) {
            *c = z * d;
        }
        self.fft.inverse_dealiased(&mut self.cbuf, &mut self.g1);
        for (c, (z, d)) in self.cbuf.iter_mut().zip(th.iter().zip(&self.d2)) {
            *c = z * d;
        }
        self.fft.inverse_dealiased(&mut self.cbuf, &mut self.g2);
        for i in 0..self.n * self.n {
            self.adv[i] = u1[i] * self.g1[i] + u2[i] * self.g2[i];
            self.f1[i] = u1[i] * self.th[i];
            self.f2[i] = u2[i] * self.th[i];
        }
        self.fft.forward_dealiased(&self.adv, out);
        self.fft.forward_dealiased(&self.f1, &mut self.s1);
        self.fft.forward_dealiased(&self.f2, &mut self.s2);
        for i in 0..out.len() {
            out[i] = if self.keep[i] {
                -0.5 * (out[i] + self.d1[i] * self.s1[i] + self.d2[i] * self.s2[i])
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
}

/// One trajectory advanced in lockstep with others sharing the velocity.
struct Run {
    kappa: f64,
    theta: Vec<Complex64>,
    diag: RunDiagnostics,
    e0: f64,
    cum: f64,
}

impl Run {
    fn diffuse(&mut self, ws: &Workspace, h: f64) {
        let mut lost = 0.0;
        for i in 0..self.theta.len() {
            let f = (-4.0 * PI * PI * self.kappa * ws.k2[i] * h).exp();
            let before = self.theta[i].norm_sqr();
            self.theta[i] *= f;
            lost += ws.weight[i] * before * (1.0 - f * f);
        }
        self.cum += lost;
    }

    fn record(&mut self, ws: &Workspace, t: f64, keep: bool) -> Result<()> {
        let e = ws.energy(&self.theta);
        if !e.is_finite() {
            return Err(Error::Numerical(format!("non-finite variance at t = {t}")));
        }
        let d = &mut self.diag;
        d.times.push(t);
        d.l2sq.push(e);
        d.cum_dissipation.push(self.cum);
        let scale = if self.e0 > 0.0 { self.e0 } else { 1.0 };
        d.balance_residual.push((self.e0 - e - self.cum).abs() / scale);
        let snap = ScalarField { grid_n: ws.n, coeffs: self.theta.clone(), time: t };
        let vals = d.probes.iter().map(|&k| snap.coefficient(k)).collect();
        d.probe_values.push(vals);
        if keep {
            d.trajectory.push(snap);
        }
        Ok(())
    }
}

/// Solves from `theta0` to `t_end` with default options and step `dt`.
pub fn solve_advdiff(
    velocity: &dyn VelocityField,
    kappa: f64,
    theta0: &ScalarField,
    t_end: f64,
    dt: f64,
) -> Result<(ScalarField, RunDiagnostics)> {
    let opts = SolveOptions { dt, ..Default::default() };
    solve_with(velocity, kappa, theta0, t_end, &opts)
}

pub fn solve_with(
    velocity: &dyn VelocityField,
    kappa: f64,
    theta0: &ScalarField,
    t_end: f64,
    opts: &SolveOptions,
) -> Result<(ScalarField, RunDiagnostics)> {
    solve_many(velocity, &[kappa], theta0, t_end, opts)?.pop().ok_or_else(|| Error::Numerical("no run".into()))
}

/// Advances one trajectory per diffusivity with shared velocity samples.
pub fn solve_many(
    velocity: &dyn VelocityField,
    kappas: &[f64],
    theta0: &ScalarField,
    t_end: f64,
    opts: &SolveOptions,
) -> Result<Vec<(ScalarField, RunDiagnostics)>> {
    let n = theta0.grid_n;
    if kappas.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::Domain("diffusivities must be finite and nonnegative".into()));
    }
    if !(opts.dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Domain("dt must be positive and t_end nonnegative".into()));
    }
    let zero = velocity.is_zero();
    if !zero && (n as f64) < 8.0 / velocity.finest_scale() - 1e-9 {
        return Err(Error::Resolution(format!(
            "grid {n} has fewer than 8 points per eps = {}",
            velocity.finest_scale()
        )));
    }
    let steps = ((t_end / opts.dt) - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { 0.0 };

    let mut ws = Workspace::new(n);
    let e0 = ws.energy(&theta0.coeffs);
    let mut runs: Vec<Run> = kappas
        .iter()
        .map(|&kappa| Run {
            kappa,
            theta: theta0.coeffs.clone(),
            diag: RunDiagnostics {
                kappa,
                dt,
                steps,
                times: vec![],
                l2sq: vec![],
                cum_dissipation: vec![],
                balance_residual: vec![],
                max_advection_drift: 0.0,
                max_cfl: 0.0,
                velocity_source: velocity.describe(),
                probes: opts.probes.clone(),
                probe_values: vec![],
                trajectory: vec![],
            },
            e0,
            cum: 0.0,
        })
        .collect();
    let t0 = theta0.time;
    for r in runs.iter_mut() {
        r.record(&ws, t0, opts.keep_trajectory)?;
    }

    let nn = n * n;
    let mut u = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
    let mut have_start = false;
    let mut max_cfl = 0.0f64;
    let mut check_cfl = |u1: &[f64], u2: &[f64]| -> Result<()> {
        let umax = u1.iter().zip(u2).fold(0.0f64, |a, (x, y)| a.max((x * x + y * y).sqrt()));
        let c = dt * umax * n as f64;
        max_cfl = max_cfl.max(c);
        if c > opts.cfl {
            return Err(Error::Cfl { dt, limit: opts.cfl / (umax * n as f64) });
        }
        Ok(())
    };
    let len = theta0.coeffs.len();
    let mut k = [vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); len]];
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut stage = vec![Complex64::new(0.0, 0.0); len];

    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        for r in runs.iter_mut() {
            r.diffuse(&ws, 0.5 * dt);
        }
        if !zero {
            let steady = velocity.is_steady();
            let [ua1, ua2, um1, um2, ub1, ub2] = &mut u;
            if !have_start {
                velocity.sample(t, n, ua1, ua2)?;
                check_cfl(ua1, ua2)?;
                if steady {
                    um1.copy_from_slice(ua1);
                    um2.copy_from_slice(ua2);
                    ub1.copy_from_slice(ua1);
                    ub2.copy_from_slice(ua2);
                }
                have_start = true;
            } else if !steady {
                std::mem::swap(ua1, ub1);
                std::mem::swap(ua2, ub2);
            }
            if !steady {
                velocity.sample(t + 0.5 * dt, n, um1, um2)?;
                velocity.sample(t + dt, n, ub1, ub2)?;
                check_cfl(um1, um2)?;
                check_cfl(ub1, ub2)?;
            }
            for r in runs.iter_mut() {
                let before = ws.energy(&r.theta);
                // classical RK4
                ws.rhs(&r.theta, ua1, ua2, &mut k[0]);
                for i in 0..len {
                    acc[i] = k[0][i];
                    stage[i] = r.theta[i] + 0.5 * dt * k[0][i];
                }
                ws.rhs(&stage, um1, um2, &mut k[1]);
                for i in 0..len {
                    acc[i] += 2.0 * k[1][i];
                    stage[i] = r.theta[i] + 0.5 * dt * k[1][i];
                }
                ws.rhs(&stage, um1, um2, &mut k[0]);
                for i in 0..len {
                    acc[i] += 2.0 * k[0][i];
                    stage[i] = r.theta[i] + dt * k[0][i];
                }
                ws.rhs(&stage, ub1, ub2, &mut k[1]);
                for i in 0..len {
                    r.theta[i] += dt / 6.0 * (acc[i] + k[1][i]);
                }
                let after = ws.energy(&r.theta);
                if before > 0.0 {
                    r.diag.max_advection_drift = r.diag.max_advection_drift.max((after - before).abs() / before);
                }
            }
        }
        for r in runs.iter_mut() {
            r.diffuse(&ws, 0.5 * dt);
        }
        let done = step + 1;
        if done % opts.output_every.max(1) == 0 || done == steps {
            let tn = t0 + done as f64 * dt;
            for r in runs.iter_mut() {
                r.record(&ws, tn, opts.keep_trajectory)?;
            }
        }
    }
    let _ = &mut ws.s0;
    Ok(runs
        .into_iter()
        .map(|mut r| {
            r.diag.max_cfl = max_cfl;
            (ScalarField { grid_n: n, coeffs: r.theta, time: t0 + steps as f64 * dt }, r.diag)
        })
        .collect())
}

/// `kappa int ||grad theta||^2` over the run, half the cumulative balance
/// quantity.
pub fn dissipation_report(diag: &RunDiagnostics) -> f64 {
    0.5 * diag.cum_dissipation.last().copied().unwrap_or(0.0)
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveDiffusivity {
    pub kappa: f64,
    pub kappa_eff: f64,
    pub r_squared: f64,
    pub mode: (i64, i64),
    pub samples: usize,
}

/// Fits the decay of `|theta_hat_mode|` over `window` for data started as
/// `cos(2 pi mode . x)` and converts the rate to a diffusivity.
pub fn measure_effective_diffusivity(
    velocity: &dyn VelocityField,
    kappa: f64,
    mode: (i64, i64),
    window: (f64, f64),
    grid_n: usize,
    opts: &SolveOptions,
) -> Result<EffectiveDiffusivity> {
    let (k1, k2) = (mode.0 as f64, mode.1 as f64);
    let theta0 = ScalarField::from_fn(grid_n, |x| (2.0 * PI * (k1 * x[0] + k2 * x[1])).cos())?;
    let o = SolveOptions { probes: vec![mode], keep_trajectory: false, ..opts.clone() };
    let (_, d) = solve_with(velocity, kappa, &theta0, window.1, &o)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in d.times.iter().zip(&d.probe_values) {
        if *t >= window.0 - 1e-12 {
            xs.push(*t);
            ys.push(v[0].norm().ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::Domain("fewer than three samples in the fit window".into()));
    }
    let (slope, _, r2) = linear_fit(&xs, &ys);
    if r2 < 0.99 {
        return Err(Error::FitQuality(r2));
    }
    Ok(EffectiveDiffusivity {
        kappa,
        kappa_eff: -slope / (4.0 * PI * PI * (k1 * k1 + k2 * k2)),
        r_squared: r2,
        mode,
        samples: xs.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotropizedDiffusivity {
    pub kappa: f64,
    pub tau: f64,
    /// Decay-rate diffusivities of the `(1, 0)` and `(0, 1)` modes over one
    /// full period `2 tau`.
    pub kappa_x1: f64,
    pub kappa_x2: f64,
    /// `kappa + a^2 eps^4 / (4 kappa)`: each direction is enhanced by the
    /// steady-shear value for half of the cycle.
    pub oracle: f64,
    pub max_relative_error: f64,
}

/// Runs `cos 2 pi x1 + cos 2 pi x2` through one full cycle of alternating
/// shears and compares the per-direction decay with the duty-cycle oracle.
/// The step is shrunk so that phase switches land on step boundaries.
pub fn measure_isotropized_diffusivity(
    shear: &AlternatingShear,
    kappa: f64,
    grid_n: usize,
    opts: &SolveOptions,
) -> Result<IsotropizedDiffusivity> {
    if !(kappa > 0.0) {
        return Err(Error::Domain("kappa must be positive".into()));
    }
    let per_phase = (shear.tau / opts.dt - 1e-9).ceil().max(1.0);
    let dt = shear.tau / per_phase;
    let theta0 = ScalarField::from_fn(grid_n, |x| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos())?;
    let o = SolveOptions { dt, probes: vec![(1, 0), (0, 1)], keep_trajectory: false, ..opts.clone() };
    let t_end = 2.0 * shear.tau;
    let (_, d) = solve_with(shear, kappa, &theta0, t_end, &o)?;
    let (first, last) = match (d.probe_values.first(), d.probe_values.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Numerical("no probe samples recorded".into())),
    };
    let rate = |i: usize| -(last[i].norm() / first[i].norm()).ln() / (4.0 * PI * PI * t_end);
    let (kappa_x1, kappa_x2) = (rate(0), rate(1));
    let oracle = kappa + shear.a * shear.a * shear.eps.powi(4) / (4.0 * kappa);
    let err = ((kappa_x1 / oracle - 1.0).abs()).max((kappa_x2 / oracle - 1.0).abs());
    Ok(IsotropizedDiffusivity { kappa, tau: shear.tau, kappa_x1, kappa_x2, oracle, max_relative_error: err })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepdownReport {
    pub kappa_fine: f64,
    pub kappa_coarse: f64,
    pub dissipation_fine: f64,
    pub dissipation_coarse: f64,
    pub ratio: f64,
    pub balance_fine: f64,
    pub balance_coarse: f64,
}

/// The pair of runs behind a step-down ratio, kept for the ansatz comparison.
pub struct StepdownRuns {
    pub report: StepdownReport,
    pub fine: RunDiagnostics,
    pub coarse: RunDiagnostics,
}

/// `kappa_m ||grad theta_m||^2 / (kappa_{m-1} ||grad theta_{m-1}||^2)` over
/// `(0, t_end)`, with `theta_m` advected by `fine` and `theta_{m-1}` by
/// `coarse`. Trajectories are stored at the output times.
pub fn stepdown_ratio(
    fine: &dyn VelocityField,
    coarse: &dyn VelocityField,
    kappa_fine: f64,
    kappa_coarse: f64,
    theta0: &ScalarField,
    t_end: f64,
    opts: &SolveOptions,
) -> Result<StepdownRuns> {
    let o = SolveOptions { keep_trajectory: true, ..opts.clone() };
    let (_, df) = solve_with(fine, kappa_fine, theta0, t_end, &o)?;
    let (_, dc) = solve_with(coarse, kappa_coarse, theta0, t_end, &o)?;
    Ok(stepdown_from_runs(df, dc))
}

pub fn stepdown_from_runs(fine: RunDiagnostics, coarse: RunDiagnostics) -> StepdownRuns {
    let df = dissipation_report(&fine);
    let dc = dissipation_report(&coarse);
    StepdownRuns {
        report: StepdownReport {
            kappa_fine: fine.kappa,
            kappa_coarse: coarse.kappa,
            dissipation_fine: df,
            dissipation_coarse: dc,
            ratio: df / dc,
            balance_fine: fine.max_balance_residual(),
            balance_coarse: coarse.max_balance_residual(),
        },
        fine,
        coarse,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnsatzReport {
    pub times: Vec<f64>,
    /// `||theta_m - theta~_m||_2 / ||theta_0||_2` at each time.
    pub l2_error: Vec<f64>,
    /// `||theta_m - theta_{m-1}||_2 / ||theta_0||_2`, the corrector-free gap.
    pub l2_gap: Vec<f64>,
    /// `||corrector term||_2` at each time.
    pub corrector_norm: Vec<f64>,
    pub sup_l2_error: f64,
    pub sup_l2_gap: f64,
    /// `(kappa_m int ||grad(theta_m - theta~_m)||^2)^{1/2}` by the trapezoid rule.
    pub h1_error: f64,
}

/// Builds `theta~_m = theta_{m-1} + sum_k xi_k chi_k(t, X^{-1}) . (grad X)^T grad theta_{m-1}`
/// on the stored trajectories and compares it with `theta_m`.
pub fn two_scale_ansatz(
    field: &FieldM,
    m: usize,
    correctors: &Correctors,
    fine: &RunDiagnostics,
    coarse: &RunDiagnostics,
) -> Result<(Vec<ScalarField>, AnsatzReport)> {
    if fine.trajectory.len() != coarse.trajectory.len()
        || fine.times.iter().zip(&coarse.times).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::TimeGrid("fine and coarse trajectories are stored at different times".into()));
    }
    if fine.trajectory.is_empty() {
        return Err(Error::TimeGrid("no stored trajectory".into()));
    }
    let n = fine.trajectory[0].grid_n;
    let fft = Fft2::new(n);
    let norm0 = fine.trajectory[0].l2sq().sqrt().max(1e-300);
    let mut rep = AnsatzReport {
        times: fine.times.clone(),
        l2_error: vec![],
        l2_gap: vec![],
        corrector_norm: vec![],
        sup_l2_error: 0.0,
        sup_l2_gap: 0.0,
        h1_error: 0.0,
    };
    let mut out = Vec::with_capacity(fine.trajectory.len());
    let mut h1 = Vec::with_capacity(fine.trajectory.len());
    for (tf, tc) in fine.trajectory.iter().zip(&coarse.trajectory) {
        let t = tf.time;
        let corr = corrector_term(field, m, correctors, tc, &fft, t)?;
        let norm_c = corr.l2sq().sqrt();
        let mut approx = tc.clone();
        for (a, c) in approx.coeffs.iter_mut().zip(&corr.coeffs) {
            *a += c;
        }
        let e = tf.distance(&approx)? / norm0;
        let g = tf.distance(tc)? / norm0;
        h1.push(tf.grad_distance(&approx)?.powi(2));
        rep.l2_error.push(e);
        rep.l2_gap.push(g);
        rep.corrector_norm.push(norm_c);
        rep.sup_l2_error = rep.sup_l2_error.max(e);
        rep.sup_l2_gap = rep.sup_l2_gap.max(g);
        out.push(approx);
    }
    let mut integral = 0.0;
    for i in 1..h1.len() {
        integral += 0.5 * (h1[i] + h1[i - 1]) * (rep.times[i] - rep.times[i - 1]);
    }
    rep.h1_error = (correctors.kappa * integral).sqrt();
    Ok((out, rep))
}

/// The corrector contribution `sum_k xi_k chi_k(t, X^{-1}x) . (grad X)^T grad theta`.
pub fn corrector_term(
    field: &FieldM,
    m: usize,
    correctors: &Correctors,
    coarse: &ScalarField,
    fft: &Fft2,
    t: f64,
) -> Result<ScalarField> {
    let n = coarse.grid_n;
    let mut zero = ScalarField::zeros(n);
    zero.time = t;
    if field.disabled.get(m).copied().unwrap_or(true) || correctors.level.a == 0.0 {
        return Ok(zero);
    }
    let grad: Vec<Vec<f64>> = (0..2)
        .map(|axis| {
            let mut c = coarse.coeffs.clone();
            for (i, z) in c.iter_mut().enumerate() {
                let (d1, d2) = fft.deriv_symbols(i);
                *z *= if axis == 0 { d1 } else { d2 };
            }
            let mut o = vec![0.0; n * n];
            fft.inverse(&mut c, &mut o);
            o
        })
        .collect();
    let sc = *field.scales(m);
    let tau = sc.tau;
    let s = t / tau;
    let mut vals = vec![0.0; n * n];
    for k in ((s - 1.25).ceil() as i64)..=((s + 1.25).floor() as i64) {
        if k.rem_euclid(2) == 0 {
            continue;
        }
        let xi = field.cutoffs.xi_k(tau, k, t, 0);
        if xi == 0.0 {
            continue;
        }
        let w = correctors.weight_value(k, t);
        if w == 0.0 {
            continue;
        }
        let l = crate::params::slot_index_ratio(sc.ratio_pp, k);
        let inv = field.inv_flow(m - 1, l, t)?;
        let spec = correctors.level.shear(k);
        for i in 0..n {
            for j in 0..n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                let y = field.apply_inv(&inv, t, x)?;
                let d = y.j;
                // (grad X)^T at X^{-1}(x) is the inverse transpose of d
                let g = [grad[0][i * n + j], grad[1][i * n + j]];
                let v = [d[1][1] * g[0] - d[1][0] * g[1], -d[0][1] * g[0] + d[0][0] * g[1]];
                let (_, u, _) = spec.eval(y.y);
                vals[i * n + j] -= xi * w * (u[0] * v[0] + u[1] * v[1]);
            }
        }
    }
    let mut f = ScalarField::zeros(n);
    fft.forward(&vals, &mut f.coeffs);
    f.coeffs[0] = Complex64::new(0.0, 0.0);
    for (i, z) in f.coeffs.iter_mut().enumerate() {
        if !fft.keep(i) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    f.time = t;
    Ok(f)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub dissipation: f64,
    pub depth_used: usize,
    pub runtime_s: f64,
    pub balance_residual: f64,
    pub error: Option<String>,
}

/// Dissipation over `(0, t_end)` for each diffusivity, all advected by the
/// same field and advanced in lockstep. A failed run is recorded and the
/// sweep continues with the rest.
pub fn anomalous_sweep(
    velocity: &dyn VelocityField,
    depth: usize,
    kappas: &[f64],
    theta0: &ScalarField,
    t_end: f64,
    opts: &SolveOptions,
) -> Vec<SweepRow> {
    let start = std::time::Instant::now();
    match solve_many(velocity, kappas, theta0, t_end, opts) {
        Ok(runs) => {
            let el = start.elapsed().as_secs_f64() / kappas.len().max(1) as f64;
            runs.iter()
                .map(|(_, d)| SweepRow {
                    kappa: d.kappa,
                    dissipation: dissipation_report(d),
                    depth_used: depth,
                    runtime_s: el,
                    balance_residual: d.max_balance_residual(),
                    error: None,
                })
                .collect()
        }
        Err(_) if kappas.len() > 1 => kappas
            .iter()
            .flat_map(|&k| anomalous_sweep(velocity, depth, &[k], theta0, t_end, opts))
            .collect(),
        Err(e) => vec![SweepRow {
            kappa: kappas[0],
            dissipation: f64::NAN,
            depth_used: depth,
            runtime_s: start.elapsed().as_secs_f64(),
            balance_residual: f64::NAN,
            error: Some(e.to_string()),
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize) -> ScalarField {
        ScalarField::from_fn(n, |x| (2.0 * PI * x[0]).sin()).unwrap()
    }

    #[test]
    fn pure_diffusion_matches_heat_kernel() {
        let kappa = 0.01;
        let (th, d) = solve_advdiff(&ZeroVelocity, kappa, &sine(32), 1.0, 0.1).unwrap();
        let want = (-4.0 * PI * PI * kappa).exp();
        let got = th.coefficient((1, 0)).norm() / sine(32).coefficient((1, 0)).norm();
        assert!((got / want - 1.0).abs() < 1e-12);
        // kappa int ||grad theta||^2 = (1 - e^{-8 pi^2 kappa}) / 4 for ||sin||^2 = 1/2
        let oracle = (1.0 - (-8.0 * PI * PI * kappa).exp()) / 4.0;
        assert!((dissipation_report(&d) / oracle - 1.0).abs() < 1e-12);
        assert!(d.max_balance_residual() < 1e-14);
    }

    #[test]
    fn vertical_shear_leaves_profile_to_heat_flow() {
        // b = (0, f(x1)) and theta = g(x1): advection vanishes
        let v = SteadyShear { a: 2.0, eps: 0.25, along_e1: false };
        let (th, _) = solve_advdiff(&v, 0.02, &sine(32), 0.5, 0.004).unwrap();
        let want = (-4.0 * PI * PI * 0.02 * 0.5f64).exp();
        let got = th.coefficient((1, 0)).norm() / sine(32).coefficient((1, 0)).norm();
        assert!((got - want).abs() < 1e-12);
        assert!(th.coefficient((0, 1)).norm() < 1e-14);
    }

    #[test]
    fn inviscid_advection_conserves_variance() {
        let v = SteadyShear { a: 1.0, eps: 0.125, along_e1: false };
        let th0 = ScalarField::default_initial(64);
        let opts = SolveOptions { dt: 2e-3, output_every: 50, ..Default::default() };
        let (_, d) = solve_with(&v, 0.0, &th0, 0.5, &opts).unwrap();
        assert!(d.max_advection_drift < 1e-8, "{}", d.max_advection_drift);
    }

    #[test]
    fn cfl_and_resolution_are_enforced() {
        let v = SteadyShear { a: 1.0, eps: 0.125, along_e1: false };
        let th0 = ScalarField::default_initial(64);
        assert!(matches!(solve_advdiff(&v, 0.01, &th0, 0.1, 0.05), Err(Error::Cfl { .. })));
        let th0 = ScalarField::default_initial(32);
        assert!(matches!(solve_advdiff(&v, 0.01, &th0, 0.1, 0.001), Err(Error::Resolution(_))));
    }

    #[test]
    fn zero_velocity_gives_exact_kappa() {
        let opts = SolveOptions { dt: 0.05, output_every: 1, ..Default::default() };
        let r = measure_effective_diffusivity(&ZeroVelocity, 3e-3, (0, 1), (0.0, 2.0), 16, &opts).unwrap();
        assert!((r.kappa_eff / 3e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        assert!(ScalarField::from_fn(16, |x| 1.0 + x[0].sin()).is_err());
    }
}
