//! Periodic bicubic Hermite interpolation on the unit torus.

/// Hermite data for one scalar on an `n x n` grid. Index `i * n + j` holds
/// the sample at `x = (i/n, j/n)`.
#[derive(Clone, Debug)]
pub struct HermiteGrid {
    pub n: usize,
    pub f: Vec<f64>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub fxy: Vec<f64>,
}

/// Value, gradient and Hessian of an interpolant.
#[derive(Clone, Copy, Debug, Default)]
pub struct Interp {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

#[inline]
fn basis(u: f64) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
    let u2 = u * u;
    let u3 = u2 * u;
    // value basis A_p and slope basis B_p, with first and second derivatives
    let a = [2.0 * u3 - 3.0 * u2 + 1.0, -2.0 * u3 + 3.0 * u2];
    let da = [6.0 * u2 - 6.0 * u, -6.0 * u2 + 6.0 * u];
    let dda = [12.0 * u - 6.0, -12.0 * u + 6.0];
    let b = [u3 - 2.0 * u2 + u, u3 - u2];
    let db = [3.0 * u2 - 4.0 * u + 1.0, 3.0 * u2 - 2.0 * u];
    let ddb = [6.0 * u - 4.0, 6.0 * u - 2.0];
    (a, da, dda, b, db, ddb)
}

/// Splits a periodic coordinate into a cell index and a fraction.
#[inline]
pub fn locate(x: f64, n: usize) -> (usize, usize, f64) {
    let s = x.rem_euclid(1.0) * n as f64;
    let mut i = s.floor() as usize;
    let mut u = s - i as f64;
    if i >= n {
        i = n - 1;
        u = 1.0;
    }
    (i, (i + 1) % n, u)
}

impl HermiteGrid {
    pub fn eval(&self, x: [f64; 2]) -> Interp {
        let n = self.n;
        let h = 1.0 / n as f64;
        let (i0, i1, u) = locate(x[0], n);
        let (j0, j1, v) = locate(x[1], n);
        let (au, dau, ddau, bu, dbu, ddbu) = basis(u);
        let (av, dav, ddav, bv, dbv, ddbv) = basis(v);
        let ii = [i0, i1];
        let jj = [j0, j1];
        let mut out = Interp::default();
        for p in 0..2 {
            for q in 0..2 {
                let idx = ii[p] * n + jj[q];
                let f = self.f[idx];
                let fx = self.fx[idx] * h;
                let fy = self.fy[idx] * h;
                let fxy = self.fxy[idx] * h * h;
                // each term is X(u) * Y(v)
                let terms = [
                    (f, au[p], dau[p], ddau[p], av[q], dav[q], ddav[q]),
                    (fx, bu[p], dbu[p], ddbu[p], av[q], dav[q], ddav[q]),
                    (fy, au[p], dau[p], ddau[p], bv[q], dbv[q], ddbv[q]),
                    (fxy, bu[p], dbu[p], ddbu[p], bv[q], dbv[q], ddbv[q]),
                ];
                for (c, x0, x1, x2, y0, y1, y2) in terms {
                    out.v += c * x0 * y0;
                    out.g[0] += c * x1 * y0;
                    out.g[1] += c * x0 * y1;
                    out.h[0][0] += c * x2 * y0;
                    out.h[0][1] += c * x1 * y1;
                    out.h[1][1] += c * x0 * y2;
                }
            }
        }
        let inv = n as f64;
        out.g[0] *= inv;
        out.g[1] *= inv;
        out.h[0][0] *= inv * inv;
        out.h[0][1] *= inv * inv;
        out.h[1][1] *= inv * inv;
        out.h[1][0] = out.h[0][1];
        out
    }

    /// Linear combination `sum w_i grids_i` of grids with a common size.
    pub fn combine(grids: &[&HermiteGrid], w: &[f64]) -> HermiteGrid {
        let n = grids[0].n;
        let len = n * n;
        let mut r = HermiteGrid { n, f: vec![0.0; len], fx: vec![0.0; len], fy: vec![0.0; len], fxy: vec![0.0; len] };
        for (g, &c) in grids.iter().zip(w) {
            for i in 0..len {
                r.f[i] += c * g.f[i];
                r.fx[i] += c * g.fx[i];
                r.fy[i] += c * g.fy[i];
                r.fxy[i] += c * g.fxy[i];
            }
        }
        r
    }
}

/// Lagrange weights for cubic interpolation in time on uniform nodes. Returns
/// the first node index and the four weights.
pub fn cubic_time_weights(t: f64, t0: f64, dt: f64, n_nodes: usize) -> (usize, [f64; 4]) {
    let s = (t - t0) / dt;
    let last = n_nodes as i64 - 1;
    let base = ((s.floor() as i64) - 1).clamp(0, (last - 3).max(0)) as usize;
    let x = s - base as f64;
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut w = [0.0; 4];
    for a in 0..4 {
        let mut p = 1.0;
        for b in 0..4 {
            if a != b {
                p *= (x - nodes[b]) / (nodes[a] - nodes[b]);
            }
        }
        w[a] = p;
    }
    (base, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reproduces_trigonometric_field_accurately() {
        let n = 32;
        let f = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).cos();
        let mut g = HermiteGrid { n, f: vec![], fx: vec![], fy: vec![], fxy: vec![] };
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                let (sx, cx) = (2.0 * PI * x).sin_cos();
                let (sy, cy) = (2.0 * PI * y).sin_cos();
                g.f.push(sx * cy);
                g.fx.push(2.0 * PI * cx * cy);
                g.fy.push(-2.0 * PI * sx * sy);
                g.fxy.push(-4.0 * PI * PI * cx * sy);
            }
        }
        let p = [0.123, 0.877];
        let r = g.eval(p);
        assert!((r.v - f(p[0], p[1])).abs() < 1e-5);
        let gx = 2.0 * PI * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos();
        assert!((r.g[0] - gx).abs() < 1e-3);
        // grid points are reproduced exactly
        let q = g.eval([3.0 / 32.0, 5.0 / 32.0]);
        assert!((q.v - g.f[3 * n + 5]).abs() < 1e-15);
    }

    #[test]
    fn cubic_weights_are_exact_on_cubics() {
        let (b, w) = cubic_time_weights(0.37, 0.0, 0.1, 10);
        let p = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
        let v: f64 = (0..4).map(|a| w[a] * p((b + a) as f64 * 0.1)).sum();
        assert!((v - p(0.37)).abs() < 1e-14);
    }
}
