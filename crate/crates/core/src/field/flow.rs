//! Flow maps of `b_j` on one time window, computed with RK4 and the
//! variational equation, stored as displacements on a grid.
//!
//! For window l of level j+1 the flow starts from the identity at
//! `s = l tau''_{j+1}` and is needed for `t` in
//! `[s - tau''/2 - tau', s + tau''/2 + tau']`. The forward map is integrated
//! once outward from s. The inverse map at each node time `t_i` is obtained by
//! integrating backwards from `t_i` to s starting on the grid, so both maps
//! are grid-sampled in their own argument.

use super::interp::{cubic_time_weights, HermiteGrid};
use super::map2::Map2;
use super::FieldM;
use crate::cutoffs::TimeScales;
use crate::error::{Error, Result};
use crate::spectral::Fft2;
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Forward,
    Inverse,
}

#[derive(Clone, Debug)]
pub struct FlowSettings {
    /// Node spacing is `min(tau'_{j+1} / node_div_p, tau_j / node_div)`.
    pub node_div_p: f64,
    pub node_div: f64,
    /// RK4 step is `min(tau'_{j+1} / step_div_p, tau_j / step_div)`,
    /// rounded so that it divides the node spacing.
    pub step_div_p: f64,
    pub step_div: f64,
    /// Also store the forward map (needed only for checks).
    pub with_forward: bool,
    /// Largest tolerated `|det D X - 1|`.
    pub det_tol: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings { node_div_p: 4.0, node_div: 16.0, step_div_p: 64.0, step_div: 32.0, with_forward: false, det_tol: 1e-6 }
    }
}

impl FlowSettings {
    fn node_spacing_raw(&self, next: &TimeScales, cur: &TimeScales) -> f64 {
        (next.tau_p / self.node_div_p).min(cur.tau / self.node_div)
    }

    /// Number of node intervals across a window (always even).
    pub fn node_count(&self, next: &TimeScales, cur: &TimeScales) -> usize {
        let len = next.tau_pp + 2.0 * next.tau_p;
        let n = (len / self.node_spacing_raw(next, cur)).ceil() as usize;
        n + n % 2
    }

    /// Substeps per node interval.
    pub fn substeps(&self, next: &TimeScales, cur: &TimeScales) -> usize {
        let h = (next.tau_p / self.step_div_p).min(cur.tau / self.step_div);
        let len = next.tau_pp + 2.0 * next.tau_p;
        let dt = len / self.node_count(next, cur) as f64;
        (dt / h).ceil().max(1.0) as usize
    }
}

/// Diagnostics gathered while computing a window.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct FlowReport {
    pub level: usize,
    pub window: i64,
    pub nodes: usize,
    pub grid_n: usize,
    pub max_det_error: f64,
    /// `max |X(t, X^{-1}(t, x)) - x|` over sampled nodes; NaN without the
    /// forward map.
    pub composition_error: f64,
    /// `max |X(t, s, X^{-1}(t, x)) - x|` over grid points x and every node
    /// time t, with the stored inverse pushed forward by direct RK4; NaN
    /// without the forward map.
    pub node_composition_error: f64,
    /// `max ||DX - I|| / (2^23 |t - s| a_j)` over all nodes.
    pub bound_ratio: f64,
    pub max_displacement: f64,
}

#[derive(Clone, Debug)]
pub struct FlowMap {
    pub level: usize,
    pub l: i64,
    pub s: f64,
    pub lo: f64,
    pub hi: f64,
    pub dt_node: f64,
    pub grid_n: usize,
    /// Per node, displacement components of the inverse map.
    pub inverse: Vec<[HermiteGrid; 2]>,
    pub forward: Option<Vec<[HermiteGrid; 2]>>,
    pub report: FlowReport,
}

impl FlowMap {
    /// Evaluates the forward or inverse map at `(t, x)` with its Jacobian and
    /// Hessian.
    pub fn eval(&self, kind: FlowKind, t: f64, x: [f64; 2]) -> Result<Map2> {
        let slack = 1e-9 * (self.hi - self.lo);
        if t < self.lo - slack || t > self.hi + slack {
            return Err(Error::OutOfWindow { t, lo: self.lo, hi: self.hi });
        }
        let nodes = match kind {
            FlowKind::Inverse => &self.inverse,
            FlowKind::Forward => self
                .forward
                .as_ref()
                .ok_or_else(|| Error::Domain("forward map was not stored".into()))?,
        };
        let (base, w) = cubic_time_weights(t, self.lo, self.dt_node, nodes.len());
        let mut m = Map2::identity(x);
        for (a, &wa) in w.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            for c in 0..2 {
                let r = nodes[base + a][c].eval(x);
                m.y[c] += wa * r.v;
                for b in 0..2 {
                    m.j[c][b] += wa * r.g[b];
                    for d in 0..2 {
                        m.h[c][b][d] += wa * r.h[b][d];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Node times.
    pub fn node_time(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dt_node
    }
}

/// State of a batch of trajectories: positions and Jacobians.
struct Batch {
    z: Vec<[f64; 2]>,
    m: Vec<[[f64; 2]; 2]>,
}

impl Batch {
    fn identity(pts: &[[f64; 2]]) -> Self {
        Batch { z: pts.to_vec(), m: vec![[[1.0, 0.0], [0.0, 1.0]]; pts.len()] }
    }
}

/// Time contexts of `b_j` keyed by half-step index, shared by all
/// integrations of one window.
struct CtxCache<'a> {
    field: &'a FieldM,
    level: usize,
    origin: f64,
    half: f64,
    map: HashMap<i64, super::TimeCtx>,
}

impl<'a> CtxCache<'a> {
    fn get(&mut self, idx: i64) -> Result<&super::TimeCtx> {
        if !self.map.contains_key(&idx) {
            let t = self.origin + idx as f64 * self.half;
            let c = self.field.ctx(t, self.level)?;
            self.map.insert(idx, c);
        }
        Ok(&self.map[&idx])
    }
}

fn rhs(field: &FieldM, ctx: &super::TimeCtx, z: [f64; 2], m: &[[f64; 2]; 2]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let p = field.eval_ctx(ctx, z, true)?;
    let mut dm = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            dm[a][b] = p.grad_b[a][0] * m[0][b] + p.grad_b[a][1] * m[1][b];
        }
    }
    Ok((p.b, dm))
}

/// One RK4 step from half-step index `i0` in direction `dir` (+1 or -1).
fn rk4_step(cache: &mut CtxCache, batch: &mut Batch, i0: i64, dir: i64) -> Result<()> {
    let h = 2.0 * cache.half * dir as f64;
    let field = cache.field;
    let idx = [i0, i0 + dir, i0 + 2 * dir];
    for c in idx {
        cache.get(c)?;
    }
    let c0 = &cache.map[&idx[0]];
    let c1 = &cache.map[&idx[1]];
    let c2 = &cache.map[&idx[2]];
    for p in 0..batch.z.len() {
        let (z, m) = (batch.z[p], batch.m[p]);
        let add = |z: [f64; 2], m: [[f64; 2]; 2], dz: [f64; 2], dm: [[f64; 2]; 2], s: f64| {
            (
                [z[0] + s * dz[0], z[1] + s * dz[1]],
                [[m[0][0] + s * dm[0][0], m[0][1] + s * dm[0][1]], [m[1][0] + s * dm[1][0], m[1][1] + s * dm[1][1]]],
            )
        };
        let (k1z, k1m) = rhs(field, c0, z, &m)?;
        let (z2, m2) = add(z, m, k1z, k1m, 0.5 * h);
        let (k2z, k2m) = rhs(field, c1, z2, &m2)?;
        let (z3, m3) = add(z, m, k2z, k2m, 0.5 * h);
        let (k3z, k3m) = rhs(field, c1, z3, &m3)?;
        let (z4, m4) = add(z, m, k3z, k3m, h);
        let (k4z, k4m) = rhs(field, c2, z4, &m4)?;
        for a in 0..2 {
            batch.z[p][a] = z[a] + h / 6.0 * (k1z[a] + 2.0 * k2z[a] + 2.0 * k3z[a] + k4z[a]);
            for b in 0..2 {
                batch.m[p][a][b] = m[a][b] + h / 6.0 * (k1m[a][b] + 2.0 * k2m[a][b] + 2.0 * k3m[a][b] + k4m[a][b]);
            }
        }
    }
    Ok(())
}

fn grid_points(n: usize) -> Vec<[f64; 2]> {
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    v
}

/// Converts a batch started on the grid into Hermite data for the
/// displacement `z - x`.
fn to_hermite(fft: &Fft2, pts: &[[f64; 2]], b: &Batch) -> [HermiteGrid; 2] {
    let n = fft.n;
    let mk = |c: usize| {
        let f: Vec<f64> = (0..n * n).map(|p| b.z[p][c] - pts[p][c]).collect();
        let fx: Vec<f64> = (0..n * n).map(|p| b.m[p][c][0] - if c == 0 { 1.0 } else { 0.0 }).collect();
        let fy: Vec<f64> = (0..n * n).map(|p| b.m[p][c][1] - if c == 1 { 1.0 } else { 0.0 }).collect();
        let fxy = fft.derivative(&fx, 1);
        HermiteGrid { n, f, fx, fy, fxy }
    };
    [mk(0), mk(1)]
}

fn batch_stats(b: &Batch, pts: &[[f64; 2]], elapsed: f64, a_j: f64, rep: &mut FlowReport) {
    for p in 0..b.z.len() {
        let m = b.m[p];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        rep.max_det_error = rep.max_det_error.max((det - 1.0).abs());
        let dev = (m[0][0] - 1.0).abs().max(m[0][1].abs()).max(m[1][0].abs()).max((m[1][1] - 1.0).abs());
        if elapsed > 0.0 {
            rep.bound_ratio = rep.bound_ratio.max(dev / (f64::powi(2.0, 23) * elapsed * a_j));
        }
        let d = ((b.z[p][0] - pts[p][0]).powi(2) + (b.z[p][1] - pts[p][1]).powi(2)).sqrt();
        rep.max_displacement = rep.max_displacement.max(d);
    }
}

/// Computes the flow window of `b_j` for window l of level j+1.
pub fn compute_flow_window(field: &FieldM, j: usize, l: i64, grid_n: usize, st: &FlowSettings) -> Result<FlowMap> {
    if j == 0 || j + 1 > field.depth {
        return Err(Error::Domain(format!("flow level {j} needs 1 <= j < depth = {}", field.depth)));
    }
    let next = *field.scales(j + 1);
    let cur = *field.scales(j);
    let s = l as f64 * next.tau_pp;
    let lo = s - 0.5 * next.tau_pp - next.tau_p;
    let hi = s + 0.5 * next.tau_pp + next.tau_p;
    let n_int = st.node_count(&next, &cur);
    let sub = st.substeps(&next, &cur);
    let dt_node = (hi - lo) / n_int as f64;
    let half = dt_node / (2 * sub) as f64;
    let center = (n_int / 2) as i64;
    let mut cache = CtxCache { field, level: j, origin: s, half, map: HashMap::new() };
    let fft = Fft2::new(grid_n);
    let pts = grid_points(grid_n);
    let a_j = field.schedule.a[j] * field.amp_scale[j];
    let mut rep = FlowReport { level: j, window: l, nodes: n_int + 1, grid_n, composition_error: f64::NAN, node_composition_error: f64::NAN, ..Default::default() };
    let steps_per_node = sub as i64;

    // inverse: from node time back to s, one integration per node
    let mut inverse = Vec::with_capacity(n_int + 1);
    for i in 0..=n_int as i64 {
        let mut b = Batch::identity(&pts);
        let offset = i - center;
        let dir = if offset > 0 { -1 } else { 1 };
        let mut h_idx = 2 * steps_per_node * offset;
        for _ in 0..(steps_per_node * offset.abs()) {
            rk4_step(&mut cache, &mut b, h_idx, dir)?;
            h_idx += 2 * dir;
        }
        batch_stats(&b, &pts, (offset as f64 * dt_node).abs(), a_j, &mut rep);
        inverse.push(to_hermite(&fft, &pts, &b));
    }

    let forward = if st.with_forward {
        let mut nodes: Vec<Option<[HermiteGrid; 2]>> = vec![None; n_int + 1];
        for dir in [1i64, -1] {
            let mut b = Batch::identity(&pts);
            let mut h_idx = 0i64;
            let mut node = center;
            if dir == 1 {
                nodes[center as usize] = Some(to_hermite(&fft, &pts, &b));
            }
            while (dir == 1 && node < n_int as i64) || (dir == -1 && node > 0) {
                for _ in 0..steps_per_node {
                    rk4_step(&mut cache, &mut b, h_idx, dir)?;
                    h_idx += 2 * dir;
                }
                node += dir;
                batch_stats(&b, &pts, ((node - center) as f64 * dt_node).abs(), a_j, &mut rep);
                nodes[node as usize] = Some(to_hermite(&fft, &pts, &b));
            }
        }
        Some(nodes.into_iter().map(|n| n.expect("every node filled")).collect())
    } else {
        None
    };

    let mut fm = FlowMap { level: j, l, s, lo, hi, dt_node, grid_n, inverse, forward, report: rep };
    if fm.forward.is_some() {
        let stride = (grid_n / 16).max(1);
        let mut err: f64 = 0.0;
        for i in (0..=n_int).step_by((n_int / 8).max(1)) {
            let t = fm.node_time(i);
            for p in (0..grid_n * grid_n).step_by(stride * 3 + 1) {
                let x = pts[p];
                let y = fm.eval(FlowKind::Forward, t, x)?.y;
                let back = fm.eval(FlowKind::Inverse, t, y)?.y;
                err = err.max(((back[0] - x[0]).powi(2) + (back[1] - x[1]).powi(2)).sqrt());
            }
        }
        fm.report.composition_error = err;
        let mut node_err: f64 = 0.0;
        let stride = (grid_n * grid_n / 64).max(1);
        for i in 0..=n_int {
            let t = fm.node_time(i);
            for p in (0..grid_n * grid_n).step_by(stride) {
                let y = pts[p];
                let disp = [fm.inverse[i][0].f[p], fm.inverse[i][1].f[p]];
                let z = integrate_point(field, j, s, t, [y[0] + disp[0], y[1] + disp[1]], st)?.y;
                node_err = node_err.max(((z[0] - y[0]).powi(2) + (z[1] - y[1]).powi(2)).sqrt());
            }
        }
        fm.report.node_composition_error = node_err;
    }
    if fm.report.max_det_error > st.det_tol {
        return Err(Error::Tolerance(format!(
            "flow level {j} window {l}: |det - 1| = {:.3e} exceeds {:.1e}",
            fm.report.max_det_error, st.det_tol
        )));
    }
    Ok(fm)
}

/// Integrates the characteristic of `b_level` through `x` from time t back to
/// s, returning the position and Jacobian (the Hessian is not tracked).
pub fn integrate_point(field: &FieldM, level: usize, t: f64, s: f64, x: [f64; 2], st: &FlowSettings) -> Result<Map2> {
    let next = *field.scales(level + 1);
    let cur = *field.scales(level);
    let h_max = (next.tau_p / st.step_div_p).min(cur.tau / st.step_div);
    let n = ((t - s).abs() / h_max).ceil() as i64;
    let mut out = Map2::identity(x);
    if n == 0 {
        return Ok(out);
    }
    let half = (t - s).abs() / (2 * n) as f64;
    let dir = if t > s { -1 } else { 1 };
    // indices count half steps from s; the start is at t
    let mut cache = CtxCache { field, level, origin: s, half, map: HashMap::new() };
    let mut b = Batch::identity(&[x]);
    let mut idx = -2 * n * dir;
    for _ in 0..n {
        rk4_step(&mut cache, &mut b, idx, dir)?;
        idx += 2 * dir;
        cache.map.retain(|&k, _| (k - idx).abs() <= 2);
    }
    out.y = b.z[0];
    out.j = b.m[0];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoffs::calibrate_profiles;
    use crate::field::{FieldOptions, FlowBackend, InvFlow};
    use crate::params::{build_schedule, Mode};

    #[test]
    fn cached_level1_window_agrees_with_exact_shears() {
        let s = build_schedule(1.2, 2, 2, Mode::Desk).unwrap();
        let cut = calibrate_profiles(0.9, 1e-6).unwrap();
        let opts = FieldOptions {
            backends: vec![FlowBackend::Cached { grid_n: 64 }],
            flow: FlowSettings { with_forward: true, node_div: 4.0, ..Default::default() },
            ..Default::default()
        };
        let f = FieldM::new(&s, &cut, 2, opts).unwrap();
        let exact = FieldM::new(&s, &cut, 2, FieldOptions::default()).unwrap();
        let w = f.window(1, 0).unwrap();
        assert!(w.report.max_det_error < 1e-6, "{:?}", w.report);
        assert!(w.report.composition_error < 5e-4, "{:?}", w.report);
        assert!(w.report.node_composition_error < 1e-6, "{:?}", w.report);
        let x = [0.37, 0.61];
        // at node times only the spatial interpolation contributes
        for i in [2, w.inverse.len() / 3, w.inverse.len() - 1] {
            let t = w.node_time(i);
            let a = w.eval(FlowKind::Inverse, t, x).unwrap();
            let b = exact.apply_inv(&InvFlow::Shears(exact.level1_shears(0.0, t)), t, x).unwrap();
            for c in 0..2 {
                assert!((a.y[c] - b.y[c]).abs() < 1e-4, "{t} {:?} {:?}", a.y, b.y);
                for d in 0..2 {
                    assert!((a.j[c][d] - b.j[c][d]).abs() < 1e-2, "{t} {:?} {:?}", a.j, b.j);
                }
            }
            let p = integrate_point(&exact, 1, t, 0.0, x, &FlowSettings::default()).unwrap();
            assert!((p.y[0] - b.y[0]).abs() < 1e-6 && (p.y[1] - b.y[1]).abs() < 1e-6, "{:?} {:?}", p.y, b.y);
            assert!((p.det() - 1.0).abs() < 1e-8);
        }
        let t = 0.37 * exact.scales(2).tau_pp;
        let a = w.eval(FlowKind::Inverse, t, x).unwrap();
        let b = exact.apply_inv(&InvFlow::Shears(exact.level1_shears(0.0, t)), t, x).unwrap();
        assert!((a.y[0] - b.y[0]).abs() + (a.y[1] - b.y[1]).abs() < 1e-3);
        assert!(w.eval(FlowKind::Inverse, 10.0, [0.0, 0.0]).is_err());
    }
}
