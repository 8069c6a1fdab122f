//! Matrix approximation of the Dirichlet-to-Neumann map from electrode data.
//!
//! Relative electrode data `Uᵀ I` approximate the relative ND map in the
//! arc-length trigonometric basis. Adding the homogeneous ND matrix `R₁`
//! and inverting gives `L̃_σ`, which is then extended by a zero row and
//! column for the constant basis function.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cem_fem::patterns::{harmonic, trig_basis};
use crate::cem_fem::CurrentPatternSet;
use crate::geometry::ConformalMap;
use crate::io;
use crate::spectral;

/// Quadrature nodes in the disc angle for the spectral `R₁`.
pub const REFERENCE_QUADRATURE: usize = 2048;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum MimicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Uᵀ I + R₁ is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("reference ND matrix did not converge (change {0:e} under refinement)")]
    NonConvergence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NdMethod {
    SpectralConformal,
    FiniteElement,
}

/// ND map of `σ ≡ 1` in the trig basis `φ_1 … φ_{M−1}`.
#[derive(Debug, Clone)]
pub struct NdMatrix {
    pub matrix: DMatrix<f64>,
    pub method: NdMethod,
    pub resolution: usize,
}

/// `L_σ` together with the un-augmented block and diagnostics.
#[derive(Debug, Clone)]
pub struct DnMatrix {
    /// `M × M`, first row and column zero.
    pub full: DMatrix<f64>,
    pub noise_level: f64,
    pub sample_id: Option<String>,
    pub condition: f64,
}

impl DnMatrix {
    /// `L̃_σ`, the block acting on the mean-free basis.
    pub fn reduced(&self) -> DMatrix<f64> {
        let m = self.full.nrows();
        self.full.view((1, 1), (m - 1, m - 1)).into_owned()
    }

    pub fn electrodes(&self) -> usize {
        self.full.nrows()
    }

    /// Largest entry of `L̃ − L̃ᵀ` relative to the largest entry of `L̃`.
    pub fn asymmetry(&self) -> f64 {
        let r = self.reduced();
        (&r - r.transpose()).amax() / r.amax()
    }
}

/// Relative ND matrix `Uᵀ I` from relative voltages and the pattern set.
pub fn relative_nd_matrix(relative: &DMatrix<f64>, patterns: &CurrentPatternSet) -> Result<DMatrix<f64>, MimicError> {
    if relative.shape() != patterns.currents.shape() {
        return Err(MimicError::Dimension(format!(
            "voltages {:?} vs currents {:?}",
            relative.shape(),
            patterns.currents.shape()
        )));
    }
    Ok(relative.transpose() * &patterns.currents)
}

fn spectral_nd(map: &ConformalMap, m: usize, n: usize) -> DMatrix<f64> {
    let length = map.perimeter();
    let nodes: Vec<(f64, f64)> = spectral::nodes(n).into_iter().map(|t| (map.arc_at(t), map.boundary_speed(t))).collect();
    // pulled-back Neumann data φ_k(s(θ))|Ψ'(e^{iθ})|
    let coeffs: Vec<Vec<Complex64>> = (1..m)
        .map(|k| {
            let g: Vec<f64> = nodes.iter().map(|&(s, w)| trig_basis(k, length, s) * w).collect();
            spectral::forward_real(&g)
        })
        .collect();
    let mut r = DMatrix::zeros(m - 1, m - 1);
    for j in 0..m - 1 {
        for k in j..m - 1 {
            let mut acc = 0.0;
            for b in 1..n {
                let w = spectral::wavenumber(b, n);
                if n % 2 == 0 && b == n / 2 {
                    continue;
                }
                acc += (coeffs[j][b].conj() * coeffs[k][b]).re / w.unsigned_abs() as f64;
            }
            r[(j, k)] = 2.0 * PI * acc;
            r[(k, j)] = r[(j, k)];
        }
    }
    r
}

/// `R₁` by conformal pull-back: the Neumann problem on the disc is diagonal
/// in Fourier modes (`ĝ_n ↦ ĝ_n/|n|`).
pub fn reference_nd_matrix(map: &ConformalMap, m: usize) -> Result<NdMatrix, MimicError> {
    let n = REFERENCE_QUADRATURE;
    let coarse = spectral_nd(map, m, n / 2);
    let fine = spectral_nd(map, m, n);
    let change = (&fine - &coarse).amax() / fine.amax();
    if change > 1e-6 {
        return Err(MimicError::NonConvergence(change));
    }
    Ok(NdMatrix { matrix: fine, method: NdMethod::SpectralConformal, resolution: n })
}

/// Exact ND matrix of the unit disc: `diag(1/⌈k/2⌉)`.
pub fn disc_nd_matrix(m: usize) -> NdMatrix {
    let matrix = DMatrix::from_fn(m - 1, m - 1, |i, j| if i == j { 1.0 / harmonic(i + 1) as f64 } else { 0.0 });
    NdMatrix { matrix, method: NdMethod::SpectralConformal, resolution: 0 }
}

/// `L̃_σ = (Uᵀ I + R₁)⁻¹`, zero-augmented to `M × M`.
pub fn dn_matrix(relative: &DMatrix<f64>, reference: &NdMatrix) -> Result<DnMatrix, MimicError> {
    if relative.shape() != reference.matrix.shape() {
        return Err(MimicError::Dimension(format!(
            "relative {:?} vs reference {:?}",
            relative.shape(),
            reference.matrix.shape()
        )));
    }
    let sum = relative + &reference.matrix;
    let sv = sum.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(MimicError::IllConditioned(condition));
    }
    let inv = sum.try_inverse().ok_or(MimicError::IllConditioned(f64::INFINITY))?;
    let m = inv.nrows() + 1;
    let mut full = DMatrix::zeros(m, m);
    full.view_mut((1, 1), (m - 1, m - 1)).copy_from(&inv);
    Ok(DnMatrix { full, noise_level: 0.0, sample_id: None, condition })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DnMeta {
    pub electrodes: usize,
    pub noise_level: f64,
    pub sample_id: Option<String>,
    pub condition: f64,
}

/// Store `L_σ` row-major as little-endian `f64` with a JSON sidecar.
pub fn write_dn(path: &Path, dn: &DnMatrix) -> std::io::Result<()> {
    let m = dn.full.nrows();
    let flat: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| dn.full[(i, j)]).collect();
    io::write_f64(path, &flat)?;
    io::write_json(
        &io::sidecar(path),
        &DnMeta { electrodes: m, noise_level: dn.noise_level, sample_id: dn.sample_id.clone(), condition: dn.condition },
    )
}

pub fn read_dn(path: &Path) -> std::io::Result<DnMatrix> {
    let meta: DnMeta = io::read_json(&io::sidecar(path))?;
    let flat = io::read_f64(path)?;
    let m = meta.electrodes;
    if flat.len() != m * m {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "DN matrix size mismatch"));
    }
    Ok(DnMatrix {
        full: DMatrix::from_row_slice(m, m, &flat),
        noise_level: meta.noise_level,
        sample_id: meta.sample_id,
        condition: meta.condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HELMET_SEMI_AXES;

    #[test]
    fn disc_reference_is_diagonal_harmonic() {
        let r = reference_nd_matrix(&ConformalMap::identity(), 65).unwrap();
        let exact = disc_nd_matrix(65);
        assert!((&r.matrix - &exact.matrix).amax() < 1e-12);
    }

    #[test]
    fn ellipse_reference_is_symmetric_positive() {
        let map = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, 32).unwrap();
        let r = reference_nd_matrix(&map, 65).unwrap().matrix;
        assert!((&r - r.transpose()).amax() < 1e-8 * r.amax());
        let off = (0..64).flat_map(|i| (0..64).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|ij| r[ij].abs()).fold(0.0, f64::max);
        assert!(off > 1e-3);
        assert!(r.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn homogeneous_data_inverts_reference() {
        let r = disc_nd_matrix(9);
        let dn = dn_matrix(&DMatrix::zeros(8, 8), &r).unwrap();
        assert!(dn.full.row(0).iter().chain(dn.full.column(0).iter()).all(|&v| v == 0.0));
        for k in 1..9 {
            assert!((dn.full[(k, k)] - harmonic(k) as f64).abs() < 1e-12);
        }
    }
}
