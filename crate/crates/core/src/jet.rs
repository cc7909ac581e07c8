//! Truncated Taylor arithmetic in one variable.
//!
//! A [`Jet`] stores `f(x0 + s) = sum_j c[j] s^j` up to a fixed order. Only the
//! operations the cutoff profiles need are provided.

pub const MAX_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; MAX_ORDER + 1],
    pub n: usize,
}

impl Jet {
    pub fn constant(v: f64, n: usize) -> Self {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = v;
        Jet { c, n }
    }

    /// The identity jet `x0 + s`.
    pub fn variable(x0: f64, n: usize) -> Self {
        let mut j = Self::constant(x0, n);
        if n >= 1 {
            j.c[1] = 1.0;
        }
        j
    }

    /// Affine input `a + b s`.
    pub fn affine(a: f64, b: f64, n: usize) -> Self {
        let mut j = Self::constant(a, n);
        if n >= 1 {
            j.c[1] = b;
        }
        j
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = *self;
        for j in 0..=self.n {
            r.c[j] += o.c[j];
        }
        r
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        let mut r = *self;
        for j in 0..=self.n {
            r.c[j] -= o.c[j];
        }
        r
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut r = *self;
        for j in 0..=self.n {
            r.c[j] *= s;
        }
        r
    }

    pub fn add_const(&self, v: f64) -> Jet {
        let mut r = *self;
        r.c[0] += v;
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut r = Jet::constant(0.0, self.n);
        for i in 0..=self.n {
            for j in 0..=(self.n - i) {
                r.c[i + j] += self.c[i] * o.c[j];
            }
        }
        r
    }

    pub fn recip(&self) -> Jet {
        let mut r = Jet::constant(0.0, self.n);
        let inv = 1.0 / self.c[0];
        r.c[0] = inv;
        for k in 1..=self.n {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.c[j] * r.c[k - j];
            }
            r.c[k] = -inv * s;
        }
        r
    }

    pub fn exp(&self) -> Jet {
        let mut r = Jet::constant(0.0, self.n);
        r.c[0] = self.c[0].exp();
        for k in 1..=self.n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * r.c[k - j];
            }
            r.c[k] = s / k as f64;
        }
        r
    }

    /// `j`-th derivative at the expansion point.
    pub fn deriv(&self, j: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=j {
            f *= i as f64;
        }
        self.c[j] * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_affine_matches_closed_form() {
        let j = Jet::affine(0.3, 2.0, 6).exp();
        for k in 0..=6 {
            let want = 2f64.powi(k as i32) * 0.3f64.exp();
            assert!((j.deriv(k) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn recip_derivatives() {
        // d^k/dx^k 1/x = (-1)^k k! / x^{k+1}
        let x = 0.7;
        let j = Jet::variable(x, 6).recip();
        let mut fact = 1.0;
        for k in 0..=6 {
            if k > 0 {
                fact *= k as f64;
            }
            let want = (-1f64).powi(k as i32) * fact / x.powi(k as i32 + 1);
            assert!((j.deriv(k) - want).abs() < 1e-10 * want.abs());
        }
    }

    #[test]
    fn product_rule() {
        let x = Jet::variable(1.5, 4);
        let sq = x.mul(&x);
        assert_eq!(sq.deriv(0), 2.25);
        assert_eq!(sq.deriv(1), 3.0);
        assert_eq!(sq.deriv(2), 2.0);
        assert_eq!(sq.deriv(3), 0.0);
    }
}
