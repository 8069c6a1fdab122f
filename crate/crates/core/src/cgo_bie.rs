//! Boundary traces of complex geometrical optics solutions.
//!
//! The CGO solution `f = e^{ikz}(1 + ω)` of `∂̄f = μ ∂f̄` has a trace
//! `W = 1 + ω` on `∂Ω` determined by
//!
//! ```text
//! W + 1 = (P^k + P_0) W,      P^k g = e^{-ikz} P_μ(e^{ikz} g),
//! ```
//!
//! where `P_0` is the interior Cauchy projection and `P_μ` the real-linear
//! projection onto traces of solutions of the Beltrami equation,
//!
//! ```text
//! P_μ g = ½(Re g + i H_μ Re g) + ½ i(Im g + i H_{-μ} Im g) + ½⟨g⟩.
//! ```
//!
//! `H_μ` maps `u` to the `σ`-harmonic conjugate of its extension, so
//! `∂_s H_μ u = Λ_σ u`; for `-μ` the conductivity is `1/σ` and
//! `H_{-μ} = -ℛ_σ ∂_s`. Both are split into the exact homogeneous transform
//! `H_1` (the conjugate function pulled back through the conformal map) and
//! a finite-rank correction from the measured matrices:
//!
//! ```text
//! H_μ  = H_1 + ∂_s⁻¹ (L̃_σ − R₁⁻¹),     H_{-μ} = H_1 − (L̃_σ⁻¹ − R₁) ∂_s .
//! ```
//!
//! The system is discretised by Nyström collocation on equispaced disc
//! angles and solved densely as a real `2N × 2N` system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cem_fem::patterns::{harmonic, trig_basis};
use crate::dn_mimic::{DnMatrix, NdMatrix};
use crate::geometry::ConformalMap;
use crate::spectral;

pub const DEFAULT_TAU_MAX: f64 = 5.0;
pub const DEFAULT_N_TAU: usize = 33;
pub const DEFAULT_ANGLE_INDICES: [usize; 6] = [4, 5, 6, 12, 13, 14];
pub const DEFAULT_BOUNDARY_NODES: usize = 129;
pub const DEFAULT_MODES: usize = 32;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BieError {
    #[error("invalid k-grid: {0}")]
    Grid(String),
    #[error("n_modes={modes} exceeds (M-1)/2={max}")]
    TooManyModes { modes: usize, max: usize },
    #[error("need an odd number of boundary nodes >= 17, got {0}")]
    BoundaryNodes(usize),
    #[error("operators built for M={expected}, DN matrix has M={got}")]
    Electrodes { expected: usize, got: usize },
    #[error("L̃_σ is not invertible")]
    Singular,
    #[error("dense solve failed at k={0}")]
    SolveFailed(Complex64),
    #[error("residual {residual:e} above tolerance at k={k}")]
    Residual { k: Complex64, residual: f64 },
    #[error("{} of the k-grid solves failed, first at (angle {}, tau {})", .0.len(), .0[0].0, .0[0].1)]
    Batch(Vec<(usize, usize, String)>),
}

/// Spectral parameters `k = τ e^{iφ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub tau_max: f64,
    pub taus: Vec<f64>,
    pub angles: Vec<f64>,
}

impl KGrid {
    pub fn k(&self, angle: usize, tau: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angles[angle]) * self.taus[tau]
    }

    pub fn spacing(&self) -> f64 {
        self.taus[1] - self.taus[0]
    }

    pub fn zero_index(&self) -> usize {
        self.taus.len() / 2
    }
}

/// The six virtual X-ray directions, at multiples of `π/8`.
pub fn default_angles() -> Vec<f64> {
    DEFAULT_ANGLE_INDICES.iter().map(|&i| i as f64 * PI / 8.0).collect()
}

pub fn build_k_grid(tau_max: f64, n_tau: usize, angles: &[f64]) -> Result<KGrid, BieError> {
    if !(tau_max > 0.0) {
        return Err(BieError::Grid(format!("tau_max must be positive, got {tau_max}")));
    }
    if n_tau < 17 || n_tau % 2 == 0 {
        return Err(BieError::Grid(format!("n_tau must be odd and >= 17, got {n_tau}")));
    }
    if angles.is_empty() {
        return Err(BieError::Grid("no angles".into()));
    }
    let half = (n_tau / 2) as f64;
    let taus = (0..n_tau)
        .map(|i| {
            let j = i as f64 - half;
            // exact zero and exact symmetry
            if j == 0.0 { 0.0 } else { tau_max * j / half }
        })
        .collect();
    Ok(KGrid { tau_max, taus, angles: angles.to_vec() })
}

/// Equispaced disc-angle nodes on `∂Ω` with the trapezoidal rule.
///
/// The node count is odd so that every discrete Fourier mode has a
/// well-defined conjugate and no Nyquist mode needs special treatment.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub thetas: Vec<f64>,
    pub points: Vec<Complex64>,
    /// `dz/dθ` at each node.
    pub dz: Vec<Complex64>,
    pub speed: Vec<f64>,
    pub arcs: Vec<f64>,
    pub length: f64,
}

impl BoundaryQuadrature {
    pub fn new(map: &ConformalMap, n: usize) -> Result<Self, BieError> {
        if n < 17 || n % 2 == 0 {
            return Err(BieError::BoundaryNodes(n));
        }
        let thetas = spectral::nodes(n);
        Ok(Self {
            points: thetas.iter().map(|&t| map.boundary_point(t)).collect(),
            dz: thetas.iter().map(|&t| map.boundary_dz(t)).collect(),
            speed: thetas.iter().map(|&t| map.boundary_speed(t)).collect(),
            arcs: thetas.iter().map(|&t| map.arc_at(t)).collect(),
            length: map.perimeter(),
            thetas,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    /// `(1/2πi) ∮ g dz` by the trapezoidal rule.
    pub fn contour_average(&self, g: &[Complex64]) -> Complex64 {
        let sum: Complex64 = g.iter().zip(&self.dz).map(|(a, b)| a * b).sum();
        sum * self.step() / (2.0 * PI * Complex64::i())
    }
}

/// Geometry-only operators, shared by every sample on the same domain.
#[derive(Debug, Clone)]
pub struct BieOperators {
    pub quad: BoundaryQuadrature,
    electrodes: usize,
    /// `H_1` as an `N × N` real matrix.
    h1: DMatrix<f64>,
    /// Interior Cauchy projection, real and imaginary parts.
    p0_re: DMatrix<f64>,
    p0_im: DMatrix<f64>,
    /// Samples → basis coefficients `∫ u φ_k ds`, `(M−1) × N`.
    analysis: DMatrix<f64>,
    /// Basis coefficients → samples, `N × (M−1)`.
    synthesis: DMatrix<f64>,
    /// Arc-length mean weights.
    mean_weights: Vec<f64>,
}

impl BieOperators {
    pub fn new(map: &ConformalMap, boundary_nodes: usize, electrodes: usize) -> Result<Self, BieError> {
        let quad = BoundaryQuadrature::new(map, boundary_nodes)?;
        let n = quad.len();
        let dtheta = quad.step();
        let mean_weights: Vec<f64> = quad.speed.iter().map(|v| v * dtheta / quad.length).collect();

        let mut conj = DMatrix::zeros(n, n);
        let mut deriv = DMatrix::<f64>::zeros(n, n);
        let mut unit = vec![0.0; n];
        for l in 0..n {
            unit[l] = 1.0;
            let c = spectral::conjugate_function(&unit);
            conj.column_mut(l).copy_from_slice(&c);
            let d = spectral_derivative(&unit);
            deriv.column_mut(l).copy_from_slice(&d);
            unit[l] = 0.0;
        }
        // H_1 u = C u − ⟨C u⟩_s
        let w = DVector::from_column_slice(&mean_weights);
        let row_mean = w.transpose() * &conj;
        let mut h1 = conj;
        for j in 0..n {
            for l in 0..n {
                h1[(j, l)] -= row_mean[l];
            }
        }

        let scale = Complex64::new(0.0, -dtheta / (2.0 * PI)); // Δθ/(2πi)
        let mut p0_re = DMatrix::zeros(n, n);
        let mut p0_im = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = Complex64::new(0.0, 0.0);
            for l in 0..n {
                let mut v = scale * deriv[(j, l)];
                if l != j {
                    let kern = quad.dz[l] / (quad.points[l] - quad.points[j]);
                    v += scale * kern;
                    diag -= scale * kern;
                }
                p0_re[(j, l)] += v.re;
                p0_im[(j, l)] += v.im;
            }
            p0_re[(j, j)] += 1.0 + diag.re;
            p0_im[(j, j)] += diag.im;
        }

        let m1 = electrodes - 1;
        let analysis = DMatrix::from_fn(m1, n, |k, j| trig_basis(k + 1, quad.length, quad.arcs[j]) * quad.speed[j] * dtheta);
        let synthesis = DMatrix::from_fn(n, m1, |j, k| trig_basis(k + 1, quad.length, quad.arcs[j]));
        Ok(Self { quad, electrodes, h1, p0_re, p0_im, analysis, synthesis, mean_weights })
    }

    pub fn electrodes(&self) -> usize {
        self.electrodes
    }

    /// `H_1` applied to real samples.
    pub fn hilbert_homogeneous(&self, u: &[f64]) -> Vec<f64> {
        (&self.h1 * DVector::from_column_slice(u)).iter().copied().collect()
    }

    /// Interior Cauchy projection of complex samples.
    pub fn cauchy_projection(&self, g: &[Complex64]) -> Vec<Complex64> {
        let re = DVector::from_iterator(g.len(), g.iter().map(|c| c.re));
        let im = DVector::from_iterator(g.len(), g.iter().map(|c| c.im));
        let out_re = &self.p0_re * &re - &self.p0_im * &im;
        let out_im = &self.p0_im * &re + &self.p0_re * &im;
        out_re.iter().zip(out_im.iter()).map(|(a, b)| Complex64::new(*a, *b)).collect()
    }
}

/// Derivative in θ of equispaced real samples (Nyquist mode dropped).
fn spectral_derivative(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut c = spectral::forward_real(u);
    for (b, cb) in c.iter_mut().enumerate() {
        let w = spectral::wavenumber(b, n);
        *cb = if n % 2 == 0 && b == n / 2 { Complex64::new(0.0, 0.0) } else { *cb * Complex64::new(0.0, w as f64) };
    }
    spectral::inverse(&c).into_iter().map(|z| z.re).collect()
}

/// `∂_s` on basis coefficients: `φ_cos,n ↦ −(2πn/L) φ_sin,n`, `φ_sin,n ↦ (2πn/L) φ_cos,n`.
fn derivative_matrix(m1: usize, length: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m1, m1);
    for k in (1..=m1).step_by(2) {
        if k + 1 > m1 {
            break;
        }
        let w = 2.0 * PI * harmonic(k) as f64 / length;
        // columns: input basis index, rows: output
        d[(k, k - 1)] = -w; // cos → sin
        d[(k - 1, k)] = w; // sin → cos
    }
    d
}

/// `∂_s⁻¹` on the mean-free basis, the inverse of [`derivative_matrix`].
fn antiderivative_matrix(m1: usize, length: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m1, m1);
    for k in (1..=m1).step_by(2) {
        if k + 1 > m1 {
            break;
        }
        let w = length / (2.0 * PI * harmonic(k) as f64);
        a[(k, k - 1)] = w; // cos → sin
        a[(k - 1, k)] = -w; // sin → cos
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// `P_{±μ}` for one conductivity, as real `2N × 2N` matrices acting on
/// stacked `(Re g, Im g)`.
#[derive(Debug, Clone)]
pub struct BieSystem<'a> {
    ops: &'a BieOperators,
    p_plus: DMatrix<f64>,
    p_minus: DMatrix<f64>,
}

impl<'a> BieSystem<'a> {
    /// Assemble from `L_σ` and `R₁`, keeping harmonics up to `n_modes`.
    pub fn new(ops: &'a BieOperators, dn: &DnMatrix, reference: &NdMatrix, n_modes: usize) -> Result<Self, BieError> {
        let m = dn.electrodes();
        if m != ops.electrodes {
            return Err(BieError::Electrodes { expected: ops.electrodes, got: m });
        }
        let max = (m - 1) / 2;
        if n_modes == 0 || n_modes > max {
            return Err(BieError::TooManyModes { modes: n_modes, max });
        }
        let m1 = m - 1;
        let lt = dn.reduced();
        let lt_inv = lt.clone().try_inverse().ok_or(BieError::Singular)?;
        let r1 = &reference.matrix;
        let r1_inv = r1.clone().try_inverse().ok_or(BieError::Singular)?;
        let mut d_lambda = &lt - &r1_inv;
        let mut d_nd = &lt_inv - r1;
        let keep = 2 * n_modes;
        for i in 0..m1 {
            for j in 0..m1 {
                if i >= keep || j >= keep {
                    d_lambda[(i, j)] = 0.0;
                    d_nd[(i, j)] = 0.0;
                }
            }
        }
        let length = ops.quad.length;
        let dh_plus = &ops.synthesis * (antiderivative_matrix(m1, length) * d_lambda) * &ops.analysis;
        let dh_minus = -(&ops.synthesis * (d_nd * derivative_matrix(m1, length)) * &ops.analysis);
        let h_plus = &ops.h1 + dh_plus;
        let h_minus = &ops.h1 + dh_minus;
        Ok(Self {
            ops,
            p_plus: projection(&h_plus, &h_minus, &ops.mean_weights),
            p_minus: projection(&h_minus, &h_plus, &ops.mean_weights),
        })
    }

    /// Apply `P_{±μ}` to complex samples.
    pub fn apply_projection(&self, branch: Branch, g: &[Complex64]) -> Vec<Complex64> {
        let p = match branch {
            Branch::Plus => &self.p_plus,
            Branch::Minus => &self.p_minus,
        };
        let n = g.len();
        let x = DVector::from_iterator(2 * n, g.iter().map(|c| c.re).chain(g.iter().map(|c| c.im)));
        let y = p * x;
        (0..n).map(|j| Complex64::new(y[j], y[n + j])).collect()
    }

    /// Real `2N × 2N` matrix `I − e^{-ikz} P e^{ikz} − P_0` acting on `(Re W, Im W)`.
    pub fn system_matrix(&self, k: Complex64, branch: Branch) -> DMatrix<f64> {
        let n = self.ops.quad.len();
        let p = match branch {
            Branch::Plus => &self.p_plus,
            Branch::Minus => &self.p_minus,
        };
        let e: Vec<Complex64> = self.ops.quad.points.iter().map(|z| (Complex64::i() * k * z).exp()).collect();
        // A = I − diag(e⁻¹) P diag(e) − P_0, all in real 2×2 block form
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for l in 0..n {
            let (c, s) = (e[l].re, e[l].im);
            for j in 0..n {
                // column block l of P·diag(e)
                let prr = p[(j, l)] * c + p[(j, n + l)] * s;
                let pri = -p[(j, l)] * s + p[(j, n + l)] * c;
                let pir = p[(n + j, l)] * c + p[(n + j, n + l)] * s;
                let pii = -p[(n + j, l)] * s + p[(n + j, n + l)] * c;
                // row block j times e_j⁻¹
                let inv = e[j].inv();
                let (ci, si) = (inv.re, inv.im);
                a[(j, l)] = -(ci * prr - si * pir) - self.ops.p0_re[(j, l)];
                a[(j, n + l)] = -(ci * pri - si * pii) + self.ops.p0_im[(j, l)];
                a[(n + j, l)] = -(si * prr + ci * pir) - self.ops.p0_im[(j, l)];
                a[(n + j, n + l)] = -(si * pri + ci * pii) - self.ops.p0_re[(j, l)];
            }
            a[(l, l)] += 1.0;
            a[(n + l, n + l)] += 1.0;
        }
        a
    }

    /// Trace `W_±(·, k)` on the quadrature nodes, with the normwise backward
    /// error `‖Ax − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)` of the dense solve.
    pub fn solve(&self, k: Complex64, branch: Branch) -> Result<(Vec<Complex64>, f64), BieError> {
        let n = self.ops.quad.len();
        if k == Complex64::new(0.0, 0.0) {
            return Ok((vec![Complex64::new(1.0, 0.0); n], 0.0));
        }
        let a = self.system_matrix(k, branch);
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n).fill(-1.0);
        let x = a.clone().lu().solve(&rhs).ok_or(BieError::SolveFailed(k))?;
        let row_norm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let residual = (&a * &x - &rhs).amax() / (row_norm * x.amax() + 1.0);
        if !(residual < RESIDUAL_TOLERANCE) {
            return Err(BieError::Residual { k, residual });
        }
        Ok(((0..n).map(|j| Complex64::new(x[j], x[n + j])).collect(), residual))
    }
}

fn projection(h_re: &DMatrix<f64>, h_im: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let n = h_re.nrows();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for l in 0..n {
            let avg = 0.5 * mean[l];
            p[(j, l)] = avg;
            p[(n + j, n + l)] = avg;
            p[(j, n + l)] = -0.5 * h_im[(j, l)];
            p[(n + j, l)] = 0.5 * h_re[(j, l)];
        }
        p[(j, j)] += 0.5;
        p[(n + j, n + j)] += 0.5;
    }
    p
}

/// `ω^±(z_j, τ_i e^{iφ_a})` for every grid point.
#[derive(Debug, Clone)]
pub struct CgoTraces {
    pub grid: KGrid,
    /// `[angle][tau][node]`
    pub plus: Vec<Vec<Vec<Complex64>>>,
    pub minus: Vec<Vec<Vec<Complex64>>>,
    /// Largest backward error per `[angle][tau]` over both branches.
    pub residuals: Vec<Vec<f64>>,
}

impl CgoTraces {
    pub fn max_abs(&self) -> f64 {
        self.plus
            .iter()
            .chain(&self.minus)
            .flatten()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Solve the BIE on the whole grid.
///
/// An angle `φ + π` is served from the solves at `φ` since
/// `τ e^{i(φ+π)} = (−τ) e^{iφ}` and the τ grid is symmetric.
pub fn cgo_traces(system: &BieSystem, grid: &KGrid) -> Result<CgoTraces, BieError> {
    let na = grid.angles.len();
    let nt = grid.taus.len();
    let mut source: Vec<(usize, bool)> = Vec::with_capacity(na);
    for a in 0..na {
        let twin = (0..a).find(|&b| {
            !source[b].1 && {
                let d = (grid.angles[a] - grid.angles[b] - PI).rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d) < 1e-12
            }
        });
        source.push(match twin {
            Some(b) => (b, true),
            None => (a, false),
        });
    }
    let jobs: Vec<(usize, usize, Branch)> = (0..na)
        .filter(|&a| !source[a].1)
        .flat_map(|a| (0..nt).flat_map(move |t| [(a, t, Branch::Plus), (a, t, Branch::Minus)]))
        .collect();
    let results: Vec<_> = jobs.par_iter().map(|&(a, t, br)| system.solve(grid.k(a, t), br)).collect();

    let n = system.ops.quad.len();
    let empty = vec![vec![Vec::new(); nt]; na];
    let mut plus = empty.clone();
    let mut minus = empty;
    let mut residuals = vec![vec![0.0f64; nt]; na];
    let mut failures = Vec::new();
    for (&(a, t, br), res) in jobs.iter().zip(results) {
        match res {
            Ok((w, r)) => {
                let omega: Vec<Complex64> = w.iter().map(|v| v - 1.0).collect();
                residuals[a][t] = residuals[a][t].max(r);
                match br {
                    Branch::Plus => plus[a][t] = omega,
                    Branch::Minus => minus[a][t] = omega,
                }
            }
            Err(e) => {
                failures.push((a, t, e.to_string()));
                let zero = vec![Complex64::new(0.0, 0.0); n];
                match br {
                    Branch::Plus => plus[a][t] = zero,
                    Branch::Minus => minus[a][t] = zero,
                }
            }
        }
    }
    if !failures.is_empty() {
        return Err(BieError::Batch(failures));
    }
    for a in 0..na {
        let (b, mirrored) = source[a];
        if mirrored {
            for t in 0..nt {
                let r = nt - 1 - t;
                plus[a][t] = plus[b][r].clone();
                minus[a][t] = minus[b][r].clone();
                residuals[a][t] = residuals[b][r];
            }
        }
    }
    Ok(CgoTraces { grid: grid.clone(), plus, minus, residuals })
}
