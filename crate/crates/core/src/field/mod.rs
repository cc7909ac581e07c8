//! The recursive multi-scale vector field.
//!
//! Level m adds the shears `psi_{m,k}`, switched on by `zeta-hat zeta`, and
//! transported by the inverse flow of the field built so far:
//!
//! `phi_m = phi_{m-1} + sum_k zeta-hat_{l_k} zeta_k psi_{m,k}(X^{-1}_{m-1,l_k}(t, x))`
//!
//! with velocity `b_m = perp grad phi_m`, evaluated by the chain rule through
//! the Jacobian of the inverse flow.
//!
//! Inverse flows of `b_j` can be obtained in three ways ([`FlowBackend`]):
//! exactly for `j = 1` (the level-1 field is a time-ordered sequence of
//! steady shears with disjoint time supports, so its flow is a composition of
//! shear maps), from cached RK4 windows on a grid, or by integrating the
//! backward characteristic through each requested point.

pub mod flow;
pub mod interp;
pub mod map2;
pub mod shear;

use crate::cutoffs::{CutoffFamily, TimeScales};
use crate::error::{Error, Result};
use crate::params::{slot_index_ratio, ParameterSchedule};
use crate::quad::gauss_legendre;
use flow::{FlowKind, FlowMap, FlowSettings};
use map2::{shear_map, Map2};
use rand::{Rng, SeedableRng};
use shear::ShearSpec;
use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, RwLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowBackend {
    /// Composition of shear maps; only valid for the flow of `b_1`.
    Exact,
    /// Gridded RK4 windows computed lazily and kept in a small cache.
    Cached { grid_n: usize },
    /// Backward RK4 through each evaluation point.
    Direct,
}

#[derive(Clone, Debug)]
pub struct FieldOptions {
    /// Backend of the flow of `b_j` at index `j - 1`. Missing entries fall
    /// back to `Exact` for `j = 1` and `Direct` otherwise.
    pub backends: Vec<FlowBackend>,
    /// Working grid the field must resolve (8 points per finest eps).
    pub grid_n: usize,
    pub flow: FlowSettings,
    /// Number of flow windows kept per level.
    pub cache_windows: usize,
    /// Compute every window intersecting [0, 1] at build time.
    pub eager: bool,
    pub memory_budget: u64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            backends: vec![],
            grid_n: 0,
            flow: FlowSettings::default(),
            cache_windows: 4,
            eager: false,
            memory_budget: 2 << 30,
        }
    }
}

/// Tabulated antiderivative of `g_k = zeta-hat_{l_k} zeta_k` over the support
/// of `zeta_k`, evaluated by cubic Hermite interpolation.
struct AmpTable {
    t0: f64,
    h: f64,
    g: Vec<f64>,
    big_g: Vec<f64>,
}

impl AmpTable {
    const CELLS: usize = 256;

    fn build(cut: &CutoffFamily, sc: &TimeScales, k: i64) -> Self {
        let t0 = (k as f64 - 2.0 / 3.0) * sc.tau;
        let h = (4.0 / 3.0) * sc.tau / Self::CELLS as f64;
        let (xs, ws) = gauss_legendre(8);
        let mut g = Vec::with_capacity(Self::CELLS + 1);
        let mut big_g = Vec::with_capacity(Self::CELLS + 1);
        let mut acc = 0.0;
        for i in 0..=Self::CELLS {
            let a = t0 + i as f64 * h;
            g.push(cut.drive(sc, k, a));
            big_g.push(acc);
            if i < Self::CELLS {
                let mut s = 0.0;
                for (x, w) in xs.iter().zip(&ws) {
                    s += w * cut.drive(sc, k, a + 0.5 * h * (1.0 + x));
                }
                acc += 0.5 * h * s;
            }
        }
        AmpTable { t0, h, g, big_g }
    }

    fn eval(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.h;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= Self::CELLS as f64 {
            return self.big_g[Self::CELLS];
        }
        let i = (s.floor() as usize).min(Self::CELLS - 1);
        let u = s - i as f64;
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * self.big_g[i]
            + (u3 - 2.0 * u2 + u) * self.h * self.g[i]
            + (-2.0 * u3 + 3.0 * u2) * self.big_g[i + 1]
            + (u3 - u2) * self.h * self.g[i + 1]
    }
}

/// How one term obtains its inverse flow at the context time.
#[derive(Clone)]
pub enum InvFlow {
    Identity,
    /// Shear maps applied in order: (spec, amount).
    Shears(Vec<(ShearSpec, f64)>),
    Cached(Arc<FlowMap>),
    /// Backward integration of the flow of `b_level` to time `s`.
    Direct { level: usize, s: f64 },
}

#[derive(Clone)]
pub struct Term {
    pub spec: ShearSpec,
    pub g: f64,
    pub l: i64,
    pub inv: InvFlow,
}

/// Everything about the field at one time that does not depend on `x`.
#[derive(Clone)]
pub struct TimeCtx {
    pub t: f64,
    /// Terms per level, `terms[j]` for shear level j (index 0 unused).
    pub terms: Vec<Vec<Term>>,
}

/// Pointwise evaluation result.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointEval {
    pub psi: f64,
    pub b: [f64; 2],
    /// `grad_b[a][c] = d b_a / d x_c`.
    pub grad_b: [[f64; 2]; 2],
}

type WindowCache = (HashMap<i64, Arc<FlowMap>>, VecDeque<i64>);

pub struct FieldM {
    pub schedule: ParameterSchedule,
    pub cutoffs: CutoffFamily,
    pub depth: usize,
    pub opts: FieldOptions,
    scales: Vec<TimeScales>,
    amp_tables: Vec<RwLock<HashMap<i64, Arc<AmpTable>>>>,
    caches: Vec<Mutex<WindowCache>>,
    /// Disables all shears at the listed levels (used for controlled
    /// comparisons).
    pub disabled: Vec<bool>,
    /// Multiplies the shear amplitude at each level.
    pub amp_scale: Vec<f64>,
}

impl std::fmt::Debug for FieldM {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FieldM(depth = {})", self.depth)
    }
}

/// Builds a field of the given depth with default options.
pub fn build_field(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    depth: usize,
    grid_n: usize,
) -> Result<FieldM> {
    FieldM::new(schedule, cutoffs, depth, FieldOptions { grid_n, ..Default::default() })
}

impl FieldM {
    pub fn new(schedule: &ParameterSchedule, cutoffs: &CutoffFamily, depth: usize, opts: FieldOptions) -> Result<Self> {
        if depth > schedule.depth {
            return Err(Error::Domain(format!("depth {depth} exceeds schedule depth {}", schedule.depth)));
        }
        if depth > 0 && opts.grid_n > 0 && (opts.grid_n as f64) < 8.0 / schedule.eps[depth] - 1e-9 {
            return Err(Error::Resolution(format!(
                "grid {} does not resolve eps_{depth} = 1/{} with 8 points per wavelength",
                opts.grid_n,
                schedule.eps_inv(depth)
            )));
        }
        let scales = (0..=schedule.depth)
            .map(|m| if m == 0 { TimeScales::with_ratio(1.0, 1) } else { TimeScales::from_schedule(schedule, m) })
            .collect();
        let mut f = FieldM {
            schedule: schedule.clone(),
            cutoffs: *cutoffs,
            depth,
            opts,
            scales,
            amp_tables: (0..=depth).map(|_| RwLock::new(HashMap::new())).collect(),
            caches: (0..=depth).map(|_| Mutex::new((HashMap::new(), VecDeque::new()))).collect(),
            disabled: vec![false; depth + 1],
            amp_scale: vec![1.0; depth + 1],
        };
        for j in 1..depth {
            if f.backend(j) == FlowBackend::Exact && j != 1 {
                return Err(Error::Domain(format!("exact flows exist only for level 1, not {j}")));
            }
        }
        let need = f.memory_estimate();
        if f.opts.eager && need > f.opts.memory_budget {
            return Err(Error::MemoryBudget { need, budget: f.opts.memory_budget });
        }
        if f.opts.eager {
            for j in 1..depth {
                if let FlowBackend::Cached { .. } = f.backend(j) {
                    let n_win = (1.0 / f.scales[j + 1].tau_pp).round() as i64;
                    f.opts.cache_windows = f.opts.cache_windows.max(n_win as usize + 2);
                    for l in 0..=n_win {
                        f.window(j, l)?;
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn scales(&self, m: usize) -> &TimeScales {
        &self.scales[m]
    }

    pub fn backend(&self, j: usize) -> FlowBackend {
        self.opts
            .backends
            .get(j - 1)
            .copied()
            .unwrap_or(if j == 1 { FlowBackend::Exact } else { FlowBackend::Direct })
    }

    /// Bytes needed to hold every cached window intersecting [0, 1].
    pub fn memory_estimate(&self) -> u64 {
        let mut total = 0u64;
        for j in 1..self.depth {
            if let FlowBackend::Cached { grid_n } = self.backend(j) {
                let sc = &self.scales[j + 1];
                let windows = (1.0 / sc.tau_pp).round() as u64 + 1;
                let nodes = self.opts.flow.node_count(sc, &self.scales[j]) as u64 + 1;
                let per_node = (grid_n * grid_n) as u64 * 8 * 8 * if self.opts.flow.with_forward { 2 } else { 1 };
                total += windows * nodes * per_node;
            }
        }
        total
    }

    pub fn shear(&self, m: usize, k: i64) -> ShearSpec {
        ShearSpec::new(m, k, self.schedule.a[m] * self.amp_scale[m], self.schedule.eps[m])
    }

    fn amp_table(&self, m: usize, k: i64) -> Arc<AmpTable> {
        if let Some(t) = self.amp_tables[m].read().unwrap().get(&k) {
            return t.clone();
        }
        let t = Arc::new(AmpTable::build(&self.cutoffs, &self.scales[m], k));
        let mut w = self.amp_tables[m].write().unwrap();
        if w.len() > 4096 {
            w.clear();
        }
        w.insert(k, t.clone());
        t
    }

    /// `int_s^t zeta-hat_{l_k} zeta_k` at level m.
    pub fn drive_integral(&self, m: usize, k: i64, s: f64, t: f64) -> f64 {
        let tab = self.amp_table(m, k);
        tab.eval(t) - tab.eval(s)
    }

    /// Exact inverse flow of `b_1` from time t back to s, as shear maps.
    pub fn level1_shears(&self, s: f64, t: f64) -> Vec<(ShearSpec, f64)> {
        let sc = &self.scales[1];
        let (a, b) = if s <= t { (s, t) } else { (t, s) };
        let k_lo = (a / sc.tau - 2.0 / 3.0).ceil() as i64;
        let k_hi = (b / sc.tau + 2.0 / 3.0).floor() as i64;
        let mut out = Vec::new();
        if self.disabled[1] {
            return out;
        }
        for k in k_lo..=k_hi {
            if k.rem_euclid(2) == 0 {
                continue;
            }
            let amount = self.drive_integral(1, k, t, s);
            if amount != 0.0 {
                out.push((self.shear(1, k), amount));
            }
        }
        if t >= s {
            out.reverse();
        }
        out
    }

    /// Cached flow window of `b_j` for window l of level j+1.
    pub fn window(&self, j: usize, l: i64) -> Result<Arc<FlowMap>> {
        let grid_n = match self.backend(j) {
            FlowBackend::Cached { grid_n } => grid_n,
            _ => return Err(Error::Domain(format!("level {j} flows are not cached"))),
        };
        {
            let c = self.caches[j].lock().unwrap();
            if let Some(w) = c.0.get(&l) {
                return Ok(w.clone());
            }
        }
        let w = Arc::new(flow::compute_flow_window(self, j, l, grid_n, &self.opts.flow)?);
        let mut c = self.caches[j].lock().unwrap();
        c.0.insert(l, w.clone());
        c.1.push_back(l);
        while c.1.len() > self.opts.cache_windows.max(1) {
            let old = c.1.pop_front().unwrap();
            c.0.remove(&old);
        }
        Ok(w)
    }

    /// Inverse-flow descriptor of `b_j` at time t for window l of level j+1.
    pub fn inv_flow(&self, j: usize, l: i64, t: f64) -> Result<InvFlow> {
        if j == 0 {
            return Ok(InvFlow::Identity);
        }
        let s = l as f64 * self.scales[j + 1].tau_pp;
        Ok(match self.backend(j) {
            FlowBackend::Exact => InvFlow::Shears(self.level1_shears(s, t)),
            FlowBackend::Cached { .. } => InvFlow::Cached(self.window(j, l)?),
            FlowBackend::Direct => InvFlow::Direct { level: j, s },
        })
    }

    /// Builds the time context of `b_upto` at time t.
    pub fn ctx(&self, t: f64, upto: usize) -> Result<TimeCtx> {
        let upto = upto.min(self.depth);
        let mut terms = vec![Vec::new(); upto + 1];
        for m in 1..=upto {
            if self.disabled[m] {
                continue;
            }
            let sc = self.scales[m];
            for k in sc.active_slots(t) {
                if k.rem_euclid(2) == 0 {
                    continue;
                }
                let g = self.cutoffs.drive(&sc, k, t);
                if g == 0.0 {
                    continue;
                }
                let l = slot_index_ratio(sc.ratio_pp, k);
                let inv = self.inv_flow(m - 1, l, t)?;
                terms[m].push(Term { spec: self.shear(m, k), g, l, inv });
            }
        }
        Ok(TimeCtx { t, terms })
    }

    /// Applies an inverse-flow descriptor at x.
    pub fn apply_inv(&self, inv: &InvFlow, t: f64, x: [f64; 2]) -> Result<Map2> {
        Ok(match inv {
            InvFlow::Identity => Map2::identity(x),
            InvFlow::Shears(list) => {
                let mut m = Map2::identity(x);
                for (spec, amount) in list {
                    let step = shear_map(spec, *amount, m.y);
                    m = m.then(&step);
                }
                m
            }
            InvFlow::Cached(w) => w.eval(FlowKind::Inverse, t, x)?,
            InvFlow::Direct { level, s } => flow::integrate_point(self, *level, t, *s, x, &self.opts.flow)?,
        })
    }

    /// Evaluates stream, velocity and (optionally) velocity gradient.
    pub fn eval_ctx(&self, ctx: &TimeCtx, x: [f64; 2], want_grad: bool) -> Result<PointEval> {
        let mut out = PointEval::default();
        for level in &ctx.terms {
            for term in level {
                if want_grad && matches!(term.inv, InvFlow::Direct { .. }) {
                    return Err(Error::Domain("velocity gradient is unavailable through direct flows".into()));
                }
                let y = self.apply_inv(&term.inv, ctx.t, x)?;
                let sj = term.spec.stream_jet(y.y);
                let g = term.g;
                out.psi += g * sj.psi;
                let mut gg = [0.0; 2];
                for b in 0..2 {
                    gg[b] = sj.grad[0] * y.j[0][b] + sj.grad[1] * y.j[1][b];
                }
                out.b[0] -= g * gg[1];
                out.b[1] += g * gg[0];
                if want_grad {
                    let mut dg = [[0.0; 2]; 2];
                    for b in 0..2 {
                        for c in 0..2 {
                            let mut s = 0.0;
                            for a in 0..2 {
                                for d in 0..2 {
                                    s += sj.hess[a][d] * y.j[d][c] * y.j[a][b];
                                }
                                s += sj.grad[a] * y.h[a][b][c];
                            }
                            dg[b][c] = s;
                        }
                    }
                    for c in 0..2 {
                        out.grad_b[0][c] -= g * dg[1][c];
                        out.grad_b[1][c] += g * dg[0][c];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn stream(&self, t: f64, x: [f64; 2]) -> Result<f64> {
        Ok(self.eval_ctx(&self.ctx(t, self.depth)?, x, false)?.psi)
    }

    pub fn velocity(&self, t: f64, x: [f64; 2]) -> Result<[f64; 2]> {
        Ok(self.eval_ctx(&self.ctx(t, self.depth)?, x, false)?.b)
    }

    /// Samples the velocity of `b_depth` on an `n x n` grid.
    pub fn sample(&self, t: f64, n: usize, u1: &mut [f64], u2: &mut [f64]) -> Result<()> {
        let ctx = self.ctx(t, self.depth)?;
        for i in 0..n {
            for j in 0..n {
                let p = self.eval_ctx(&ctx, [i as f64 / n as f64, j as f64 / n as f64], false)?;
                u1[i * n + j] = p.b[0];
                u2[i * n + j] = p.b[1];
            }
        }
        Ok(())
    }

    /// Samples the stream function on an `n x n` grid.
    pub fn sample_stream(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        let ctx = self.ctx(t, self.depth)?;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.eval_ctx(&ctx, [i as f64 / n as f64, j as f64 / n as f64], false)?.psi;
            }
        }
        Ok(out)
    }

    /// A crude bound on `sup |b_depth|`: each level contributes its peak
    /// shear speed times a distortion allowance.
    pub fn speed_bound(&self) -> f64 {
        (1..=self.depth)
            .filter(|&m| !self.disabled[m])
            .map(|m| self.shear(m, 1).speed() * if m == 1 { 1.0 } else { 2.0 })
            .sum()
    }

    /// Smallest active length scale.
    pub fn finest_eps(&self) -> f64 {
        (1..=self.depth).filter(|&m| !self.disabled[m]).map(|m| self.schedule.eps[m]).fold(1.0, f64::min)
    }
}

/// Monte-Carlo Hölder quotients of the velocity.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    /// `sup |b(t,x) - b(t,y)| / |x - y|^alpha` over dyadic separations down to
    /// the finest eps.
    pub spatial: f64,
    /// `sup |b(t,x) - b(s,x)| / |t - s|^alpha` over dyadic separations down to
    /// the finest tau.
    pub temporal: f64,
    pub evaluations: usize,
}

/// Samples Hölder quotients with a fixed seed. `samples` is the number of
/// (time, point) base pairs; each base pair is tested at every dyadic
/// separation.
pub fn holder_estimate(field: &FieldM, alpha: f64, samples: usize, seed: u64) -> Result<HolderReport> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut rep = HolderReport { alpha, ..Default::default() };
    if field.depth == 0 {
        return Ok(rep);
    }
    let eps_min = field.finest_eps();
    let tau_min = field.scales[field.depth].tau;
    let n_times = (samples as f64).sqrt().ceil().max(1.0) as usize;
    let per_time = (samples + n_times - 1) / n_times;
    for _ in 0..n_times {
        let t: f64 = rng.gen();
        let ctx = field.ctx(t, field.depth)?;
        for _ in 0..per_time {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let b0 = field.eval_ctx(&ctx, x, false)?.b;
            rep.evaluations += 1;
            let mut r = 0.5;
            while r >= eps_min * 0.999 {
                let th: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                let y = [x[0] + r * th.cos(), x[1] + r * th.sin()];
                let b1 = field.eval_ctx(&ctx, y, false)?.b;
                rep.evaluations += 1;
                let d = ((b1[0] - b0[0]).powi(2) + (b1[1] - b0[1]).powi(2)).sqrt();
                rep.spatial = rep.spatial.max(d / r.powf(alpha));
                r *= 0.5;
            }
        }
        // time increments at a handful of points
        for _ in 0..2 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let b0 = field.eval_ctx(&ctx, x, false)?.b;
            let mut r = 0.5;
            while r >= tau_min * 0.999 {
                let b1 = field.velocity(t + r, x)?;
                rep.evaluations += 1;
                let d = ((b1[0] - b0[0]).powi(2) + (b1[1] - b0[1]).powi(2)).sqrt();
                rep.temporal = rep.temporal.max(d / r.powf(alpha));
                r *= 0.5;
            }
        }
    }
    Ok(rep)
}

/// Relative spectral divergence `||div b||_2 / (||b||_2 k_max)` of the
/// sampled velocity, with `k_max = 2 pi n / 2` making it dimensionless.
pub fn divergence_ratio(field: &FieldM, t: f64, n: usize) -> Result<f64> {
    let mut u1 = vec![0.0; n * n];
    let mut u2 = vec![0.0; n * n];
    field.sample(t, n, &mut u1, &mut u2)?;
    let fft = crate::spectral::Fft2::new(n);
    let d1 = fft.derivative(&u1, 0);
    let d2 = fft.derivative(&u2, 1);
    let div: f64 = d1.iter().zip(&d2).map(|(a, b)| (a + b).powi(2)).sum::<f64>();
    let grad: f64 = d1.iter().zip(&d2).map(|(a, b)| a * a + b * b).sum::<f64>();
    if grad == 0.0 {
        return Ok(0.0);
    }
    Ok((div / grad).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoffs::calibrate_profiles;
    use crate::params::{build_schedule, Mode};

    fn field(depth: usize) -> FieldM {
        let s = build_schedule(1.2, 2, 3, Mode::Desk).unwrap();
        let cut = calibrate_profiles(0.9, 1e-6).unwrap();
        FieldM::new(&s, &cut, depth, FieldOptions::default()).unwrap()
    }

    #[test]
    fn velocity_is_perp_gradient_of_stream() {
        let f = field(2);
        let e = 1e-6;
        for &t in &[0.013, 0.0417, 0.2611] {
            let ctx = f.ctx(t, 2).unwrap();
            let x = [0.21, 0.83];
            let p = f.eval_ctx(&ctx, x, true).unwrap();
            let s = |y: [f64; 2]| f.eval_ctx(&ctx, y, false).unwrap();
            let d1 = (s([x[0] + e, x[1]]).psi - s([x[0] - e, x[1]]).psi) / (2.0 * e);
            let d2 = (s([x[0], x[1] + e]).psi - s([x[0], x[1] - e]).psi) / (2.0 * e);
            assert!((p.b[0] + d2).abs() < 1e-6 && (p.b[1] - d1).abs() < 1e-6, "{t}");
            for c in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += e;
                xm[c] -= e;
                let (bp, bm) = (s(xp).b, s(xm).b);
                for a in 0..2 {
                    let fd = (bp[a] - bm[a]) / (2.0 * e);
                    assert!((p.grad_b[a][c] - fd).abs() < 1e-4 * (1.0 + fd.abs()), "{t} {a} {c}");
                }
            }
            assert!((p.grad_b[0][0] + p.grad_b[1][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn level_one_matches_closed_form() {
        let f = field(1);
        let sc = *f.scales(1);
        // slot k = 1 alone at its centre
        let t = sc.tau;
        let g = f.cutoffs.drive(&sc, 1, t);
        let x = [0.1, 0.4];
        let b = f.velocity(t, x).unwrap();
        let sp = f.shear(1, 1);
        let expect = g * sp.speed() * (sp.wavenumber() * x[0]).cos();
        assert!(b[0].abs() < 1e-15 && (b[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn direct_flows_give_velocity_but_not_gradient() {
        let f = field(3);
        let sc3 = *f.scales(3);
        let t = 5.0 * sc3.tau;
        let ctx = f.ctx(t, 3).unwrap();
        assert!(f.eval_ctx(&ctx, [0.3, 0.3], false).is_ok());
        if ctx.terms[3].iter().any(|t| matches!(t.inv, InvFlow::Direct { .. })) {
            assert!(f.eval_ctx(&ctx, [0.3, 0.3], true).is_err());
        }
        assert!(f.speed_bound() > 0.0);
    }

    #[test]
    fn sampled_field_is_divergence_free() {
        let f = field(2);
        assert!(divergence_ratio(&f, 0.0417, 64).unwrap() < 1e-10);
    }

    #[test]
    fn resolution_is_checked() {
        let s = build_schedule(1.2, 2, 2, Mode::Desk).unwrap();
        let cut = calibrate_profiles(0.9, 1e-6).unwrap();
        let opts = FieldOptions { grid_n: 32, ..Default::default() };
        assert!(matches!(FieldM::new(&s, &cut, 2, opts), Err(Error::Resolution(_))));
    }
}
