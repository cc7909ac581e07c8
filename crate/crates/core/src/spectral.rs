//! Real two-dimensional FFTs on the unit torus and spectral helpers.
//!
//! Physical arrays are row-major with index `i * n + j` at `x = (i/n, j/n)`.
//! Spectra keep the half plane `j = 0..=n/2` in the `x2` wavenumber, so index
//! `i * nh + j` holds the coefficient of `exp(2 pi i (k1 x1 + j x2))` with
//! `k1 = wavenumber(i)`. Coefficients are normalized so that the constant
//! mode equals the mean.

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

pub struct Fft2 {
    pub n: usize,
    pub nh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({})", self.n)
    }
}

/// Signed wavenumber of row/column index `i` on an `n` grid.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even and at least 4");
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Fft2 {
            n,
            nh: n / 2 + 1,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            fwd: cp.plan_fft_forward(n),
            inv: cp.plan_fft_inverse(n),
        }
    }

    pub fn spectrum_len(&self) -> usize {
        self.n * self.nh
    }

    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        self.forward_cols(input, out, self.nh);
    }

    /// Forward transform that only completes the columns `j <= n/3`; the
    /// remaining coefficients are left as partial results and must be
    /// discarded by the caller (the 2/3 mask does so).
    pub fn forward_dealiased(&self, input: &[f64], out: &mut [Complex64]) {
        self.forward_cols(input, out, self.n / 3 + 1);
    }

    fn forward_cols(&self, input: &[f64], out: &mut [Complex64], cols: usize) {
        let (n, nh) = (self.n, self.nh);
        let mut row = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for i in 0..n {
            row.copy_from_slice(&input[i * n..(i + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[i * nh..(i + 1) * nh], &mut scratch)
                .expect("r2c length");
        }
        let norm = 1.0 / (n * n) as f64;
        let mut t = vec![Complex64::new(0.0, 0.0); cols * n];
        for i in 0..n {
            for j in 0..cols {
                t[j * n + i] = out[i * nh + j];
            }
        }
        let mut cs = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        self.fwd.process_with_scratch(&mut t, &mut cs);
        for i in 0..n {
            for j in 0..cols {
                out[i * nh + j] = t[j * n + i] * norm;
            }
        }
    }

    /// Inverse transform. `input` is consumed as scratch.
    pub fn inverse(&self, input: &mut [Complex64], out: &mut [f64]) {
        self.inverse_cols(input, out, self.nh);
    }

    /// Inverse transform of a spectrum whose columns `j > n/3` vanish.
    pub fn inverse_dealiased(&self, input: &mut [Complex64], out: &mut [f64]) {
        self.inverse_cols(input, out, self.n / 3 + 1);
    }

    fn inverse_cols(&self, input: &mut [Complex64], out: &mut [f64], cols: usize) {
        let (n, nh) = (self.n, self.nh);
        let mut t = vec![Complex64::new(0.0, 0.0); cols * n];
        for i in 0..n {
            for j in 0..cols {
                t[j * n + i] = input[i * nh + j];
            }
        }
        let mut cs = vec![Complex64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        self.inv.process_with_scratch(&mut t, &mut cs);
        for i in 0..n {
            for j in 0..cols {
                input[i * nh + j] = t[j * n + i];
            }
            for j in cols..nh {
                input[i * nh + j] = Complex64::new(0.0, 0.0);
            }
        }
        let mut scratch = self.c2r.make_scratch_vec();
        for i in 0..n {
            let r = &mut input[i * nh..(i + 1) * nh];
            r[0].im = 0.0;
            r[nh - 1].im = 0.0;
            self.c2r
                .process_with_scratch(r, &mut out[i * n..(i + 1) * n], &mut scratch)
                .expect("c2r length");
        }
    }

    /// `(k1, k2)` integer wavenumbers of spectral index `idx`.
    #[inline]
    pub fn k_of(&self, idx: usize) -> (i64, i64) {
        (wavenumber(idx / self.nh, self.n), (idx % self.nh) as i64)
    }

    /// Multiplicity of a half-plane coefficient in Parseval sums.
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let j = idx % self.nh;
        if j == 0 || j == self.nh - 1 {
            1.0
        } else {
            2.0
        }
    }

    /// `(2 pi i k1, 2 pi i k2)` derivative symbols, with Nyquist modes zeroed
    /// so differentiation stays skew-adjoint.
    #[inline]
    pub fn deriv_symbols(&self, idx: usize) -> (Complex64, Complex64) {
        let (k1, k2) = self.k_of(idx);
        let half = (self.n / 2) as i64;
        let d1 = if k1.abs() == half { 0.0 } else { 2.0 * PI * k1 as f64 };
        let d2 = if k2 == half { 0.0 } else { 2.0 * PI * k2 as f64 };
        (Complex64::new(0.0, d1), Complex64::new(0.0, d2))
    }

    /// `sum |c|^2` over the full plane, i.e. the mean square of the field.
    pub fn mean_square(&self, c: &[Complex64]) -> f64 {
        c.iter().enumerate().map(|(i, z)| self.weight(i) * z.norm_sqr()).sum()
    }

    /// Two-thirds dealiasing mask.
    #[inline]
    pub fn keep(&self, idx: usize) -> bool {
        let (k1, k2) = self.k_of(idx);
        let cut = self.n as i64 / 3;
        k1.abs() <= cut && k2 <= cut
    }

    /// Spectral derivative along axis `axis` of a physical field.
    pub fn derivative(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let mut c = vec![Complex64::new(0.0, 0.0); self.spectrum_len()];
        self.forward(f, &mut c);
        for (i, z) in c.iter_mut().enumerate() {
            let (d1, d2) = self.deriv_symbols(i);
            *z *= if axis == 0 { d1 } else { d2 };
        }
        let mut out = vec![0.0; self.n * self.n];
        self.inverse(&mut c, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_single_mode() {
        let n = 16;
        let fft = Fft2::new(n);
        let mut f = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                f[i * n + j] = (2.0 * PI * (3.0 * x - 2.0 * y)).cos() + 0.5;
            }
        }
        let mut c = vec![Complex64::new(0.0, 0.0); fft.spectrum_len()];
        fft.forward(&f, &mut c);
        assert!((c[0].re - 0.5).abs() < 1e-14);
        // cos(2 pi (3x - 2y)) = (e^{i(3,-2)} + e^{i(-3,2)})/2, stored at (-3, 2)
        let idx = (n - 3) * fft.nh + 2;
        assert!((c[idx].re - 0.5).abs() < 1e-14);
        assert!((fft.mean_square(&c) - (0.25 + 0.5)).abs() < 1e-13);
        let mut back = vec![0.0; n * n];
        fft.inverse(&mut c, &mut back);
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let n = 32;
        let fft = Fft2::new(n);
        let f: Vec<f64> = (0..n * n).map(|k| (2.0 * PI * (k / n) as f64 / n as f64).sin()).collect();
        let d = fft.derivative(&f, 0);
        for k in 0..n * n {
            let x = (k / n) as f64 / n as f64;
            assert!((d[k] - 2.0 * PI * (2.0 * PI * x).cos()).abs() < 1e-11);
        }
    }
}
