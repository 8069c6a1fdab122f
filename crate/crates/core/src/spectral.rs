//! Periodic spectral helpers on equispaced grids over `[0, 2π)`.
//!
//! Everything here works on samples `f(2πj/n)`, `j = 0..n`, and uses the
//! discrete Fourier coefficients `f̂_k = n⁻¹ Σ_j f_j e^{-2πijk/n}` with the
//! signed wavenumber convention `k ∈ (-n/2, n/2]`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Signed wavenumber of FFT bin `k` for an `n`-point transform.
#[inline]
pub fn wavenumber(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Forward transform normalised by `1/n`.
pub fn forward(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Inverse of [`forward`].
pub fn inverse(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf
}

pub fn forward_real(samples: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&buf)
}

/// Periodic conjugate function (harmonic conjugate on the unit circle).
///
/// Maps `cos kθ ↦ sin kθ` and `sin kθ ↦ -cos kθ`; the mean and the
/// Nyquist mode are sent to zero.
pub fn conjugate_function(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut c = forward_real(samples);
    for (k, ck) in c.iter_mut().enumerate() {
        let w = wavenumber(k, n);
        let nyquist = n % 2 == 0 && k == n / 2;
        *ck = if w == 0 || nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            *ck * Complex64::new(0.0, -(w.signum() as f64))
        };
    }
    inverse(&c).into_iter().map(|z| z.re).collect()
}

/// Real trigonometric interpolant through equispaced samples.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    mean: f64,
    // (a_k, b_k) for cos kθ and sin kθ, k = 1..=kmax
    cos_sin: Vec<(f64, f64)>,
}

impl TrigInterpolant {
    pub fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        let c = forward_real(samples);
        let kmax = (n - 1) / 2;
        let mut cos_sin = Vec::with_capacity(kmax + 1);
        for (k, ck) in c.iter().enumerate().take(kmax + 1).skip(1) {
            cos_sin.push((2.0 * ck.re, -2.0 * ck.im));
            debug_assert!(k <= kmax);
        }
        if n % 2 == 0 && n >= 2 {
            // Nyquist term split evenly keeps interpolation real and exact at nodes
            cos_sin.push((c[n / 2].re, 0.0));
        }
        Self { mean: c[0].re, cos_sin }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut acc = self.mean;
        let (s1, c1) = theta.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        for &(a, b) in &self.cos_sin {
            let nc = ck * c1 - sk * s1;
            let ns = sk * c1 + ck * s1;
            ck = nc;
            sk = ns;
            acc += a * ck + b * sk;
        }
        acc
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        let (s1, c1) = theta.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        for (i, &(a, b)) in self.cos_sin.iter().enumerate() {
            let k = (i + 1) as f64;
            let nc = ck * c1 - sk * s1;
            let ns = sk * c1 + ck * s1;
            ck = nc;
            sk = ns;
            acc += k * (-a * sk + b * ck);
        }
        acc
    }

    /// `∫_0^θ f`, including the secular `mean·θ` term.
    pub fn integral_from_zero(&self, theta: f64) -> f64 {
        let mut acc = self.mean * theta;
        let (s1, c1) = theta.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        for (i, &(a, b)) in self.cos_sin.iter().enumerate() {
            let k = (i + 1) as f64;
            let nc = ck * c1 - sk * s1;
            let ns = sk * c1 + ck * s1;
            ck = nc;
            sk = ns;
            acc += (a * sk - b * (ck - 1.0)) / k;
        }
        acc
    }
}

/// Equispaced nodes `2πj/n`.
pub fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_of_cosine_is_sine() {
        let th = nodes(64);
        let f: Vec<f64> = th.iter().map(|t| (3.0 * t).cos() + 0.5).collect();
        let g = conjugate_function(&f);
        for (t, v) in th.iter().zip(&g) {
            assert!((v - (3.0 * t).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolant_reproduces_nodes_and_integrates() {
        let th = nodes(32);
        let f: Vec<f64> = th.iter().map(|t| 2.0 + (2.0 * t).sin() + 0.3 * t.cos()).collect();
        let p = TrigInterpolant::new(&f);
        for (t, v) in th.iter().zip(&f) {
            assert!((p.eval(*t) - v).abs() < 1e-13);
        }
        let x: f64 = 1.234;
        let exact = 2.0 * x + (1.0 - (2.0 * x).cos()) / 2.0 + 0.3 * x.sin();
        assert!((p.integral_from_zero(x) - exact).abs() < 1e-13);
        assert!((p.derivative(x) - (2.0 * (2.0 * x).cos() - 0.3 * x.sin())).abs() < 1e-12);
    }
}
