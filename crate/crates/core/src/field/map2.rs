//! Second-order jets of planar maps and their composition.

use super::shear::{Axis, ShearSpec};

/// A map evaluated at one point: value, Jacobian `j[a][b] = d y_a / d x_b`
/// and Hessian `h[a][b][c] = d^2 y_a / d x_b d x_c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Map2 {
    pub y: [f64; 2],
    pub j: [[f64; 2]; 2],
    pub h: [[[f64; 2]; 2]; 2],
}

impl Map2 {
    pub fn identity(x: [f64; 2]) -> Self {
        Map2 { y: x, j: [[1.0, 0.0], [0.0, 1.0]], h: [[[0.0; 2]; 2]; 2] }
    }

    /// `outer ∘ self`, where `outer` was evaluated at `self.y`.
    pub fn then(&self, outer: &Map2) -> Map2 {
        let mut r = Map2 { y: outer.y, j: [[0.0; 2]; 2], h: [[[0.0; 2]; 2]; 2] };
        for a in 0..2 {
            for b in 0..2 {
                r.j[a][b] = outer.j[a][0] * self.j[0][b] + outer.j[a][1] * self.j[1][b];
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut s = 0.0;
                    for d in 0..2 {
                        s += outer.j[a][d] * self.h[d][b][c];
                        for e in 0..2 {
                            s += outer.h[a][d][e] * self.j[d][b] * self.j[e][c];
                        }
                    }
                    r.h[a][b][c] = s;
                }
            }
        }
        r
    }

    pub fn det(&self) -> f64 {
        self.j[0][0] * self.j[1][1] - self.j[0][1] * self.j[1][0]
    }
}

/// The time-`A` map of the steady shear `u_{m,k}`: `z -> z + A u(z)`, which is
/// exact because each shear leaves its own level sets invariant.
pub fn shear_map(spec: &ShearSpec, amount: f64, z: [f64; 2]) -> Map2 {
    let mut m = Map2::identity(z);
    let Some(axis) = spec.axis() else { return m };
    let c = spec.wavenumber();
    let w = spec.speed() * amount;
    match axis {
        Axis::X1 => {
            let (s, co) = (c * z[0]).sin_cos();
            m.y[1] += w * co;
            m.j[1][0] = -w * c * s;
            m.h[1][0][0] = -w * c * c * co;
        }
        Axis::X2 => {
            let (s, co) = (c * z[1]).sin_cos();
            m.y[0] -= w * co;
            m.j[0][1] = w * c * s;
            m.h[0][1][1] = w * c * c * co;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_matches_finite_differences() {
        let s1 = ShearSpec::new(1, 1, 2.0, 0.25);
        let s2 = ShearSpec::new(1, 3, 2.0, 0.25);
        let f = |x: [f64; 2]| {
            let a = shear_map(&s1, 0.03, x);
            a.then(&shear_map(&s2, -0.05, a.y))
        };
        let x = [0.31, 0.77];
        let m = f(x);
        let e = 1e-6;
        for b in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += e;
            xm[b] -= e;
            let (p, q) = (f(xp), f(xm));
            for a in 0..2 {
                assert!((m.j[a][b] - (p.y[a] - q.y[a]) / (2.0 * e)).abs() < 1e-7);
                for c in 0..2 {
                    assert!((m.h[a][b][c] - (p.j[a][c] - q.j[a][c]) / (2.0 * e)).abs() < 1e-5);
                }
            }
        }
        assert!((m.det() - 1.0).abs() < 1e-14);
    }
}
