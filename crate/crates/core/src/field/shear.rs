use std::f64::consts::PI;

/// Axis along which a shear's stream function varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Depends on `x1`; the velocity points along `e2`.
    X1,
    /// Depends on `x2`; the velocity points along `e1`.
    X2,
}

/// The shear stream `psi_{m,k} = a eps^2 sin(2 pi x_i / eps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShearSpec {
    pub m: usize,
    pub k: i64,
    pub a: f64,
    pub eps: f64,
}

/// Value, gradient and Hessian of a stream function at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StreamJet {
    pub psi: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl ShearSpec {
    pub fn new(m: usize, k: i64, a: f64, eps: f64) -> Self {
        ShearSpec { m, k, a, eps }
    }

    pub fn axis(&self) -> Option<Axis> {
        match self.k.rem_euclid(4) {
            1 => Some(Axis::X1),
            3 => Some(Axis::X2),
            _ => None,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.a * self.eps * self.eps
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.eps
    }

    /// Peak speed `2 pi a eps`.
    pub fn speed(&self) -> f64 {
        2.0 * PI * self.a * self.eps
    }

    pub fn stream_jet(&self, x: [f64; 2]) -> StreamJet {
        let Some(axis) = self.axis() else { return StreamJet::default() };
        let i = if axis == Axis::X1 { 0 } else { 1 };
        let c = self.wavenumber();
        let amp = self.amplitude();
        let (s, co) = (c * x[i]).sin_cos();
        let mut j = StreamJet { psi: amp * s, ..Default::default() };
        j.grad[i] = amp * c * co;
        j.hess[i][i] = -amp * c * c * s;
        j
    }

    /// Returns `(psi, u, grad_u)` with `u = perp grad psi = (-d2 psi, d1 psi)`
    /// and `grad_u[i][j] = d_i u_j`.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let sj = self.stream_jet(x);
        let u = [-sj.grad[1], sj.grad[0]];
        let mut g = [[0.0; 2]; 2];
        for i in 0..2 {
            g[i][0] = -sj.hess[i][1];
            g[i][1] = sj.hess[i][0];
        }
        (sj.psi, u, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let (a, eps) = (3.0, 0.125);
        let s = ShearSpec::new(1, 1, a, eps);
        let (psi, u, _) = s.eval([eps / 4.0, 0.3]);
        assert!((psi - a * eps * eps).abs() < 1e-15);
        assert!(u[0] == 0.0 && u[1].abs() < 1e-14);
        let (psi, u, g) = s.eval([0.0, 0.7]);
        assert_eq!(psi, 0.0);
        assert!((u[1] - 2.0 * PI * a * eps).abs() < 1e-14);
        assert_eq!(u[0], 0.0);
        let (_, _, g2) = s.eval([eps / 4.0, 0.0]);
        assert!((g2[0][1] + 4.0 * PI * PI * a).abs() < 1e-10);
        assert_eq!(g[1], [0.0, 0.0]);

        let h = ShearSpec::new(1, 3, a, eps);
        let (_, u, _) = h.eval([0.2, 0.0]);
        assert!((u[0] + 2.0 * PI * a * eps).abs() < 1e-14);
        let (_, _, g) = h.eval([0.0, eps / 4.0]);
        assert!((g[1][0] - 4.0 * PI * PI * a).abs() < 1e-10);

        let z = ShearSpec::new(1, 2, a, eps);
        assert_eq!(z.eval([0.1, 0.2]), (0.0, [0.0; 2], [[0.0; 2]; 2]));
    }
}
