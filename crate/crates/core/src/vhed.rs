//! Virtual hybrid edge detection profiles.
//!
//! `T^±(t, φ) = (1/2πi) ∮ ω̆^±(z, t, φ) dz` with the windowed transform
//! `ω̆(z, t, φ) = ∫ e^{-aτ²} e^{-iτt} ω(z, τe^{iφ}) dτ`, and the odd part
//! `T_odd = (T⁺ − T⁻)/2` that cancels the even scattering terms.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgo_bie::{BoundaryQuadrature, CgoTraces};
use crate::io;

pub const T_NODES: usize = 256;
pub const T_MAX: f64 = 3.0;
pub const WINDOW_FLOOR: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum VhedError {
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("incomplete profile: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub tau_max: f64,
    /// Window `W_a(τ) = e^{-aτ²}`.
    pub a: f64,
    pub t_grid: Vec<f64>,
}

impl WindowSpec {
    /// Window with `W_a(τ_m) = 10⁻²` and the 256-node grid on `[-3, 3]`.
    pub fn new(tau_max: f64) -> Self {
        Self::with_sharpness(tau_max, (1.0 / WINDOW_FLOOR).ln() / (tau_max * tau_max))
    }

    pub fn with_sharpness(tau_max: f64, a: f64) -> Self {
        let t_grid = (0..T_NODES).map(|i| -T_MAX + 2.0 * T_MAX * i as f64 / (T_NODES - 1) as f64).collect();
        Self { tau_max, a, t_grid }
    }

    pub fn window(&self, tau: f64) -> f64 {
        (-self.a * tau * tau).exp()
    }

    /// Full width at half maximum of the window's transform in `t`.
    pub fn fwhm(&self) -> f64 {
        4.0 * (self.a * std::f64::consts::LN_2).sqrt()
    }
}

/// Trapezoidal weights times window and `e^{-iτt}` for one `t`.
fn kernel(traces: &CgoTraces, spec: &WindowSpec, t: f64) -> Vec<Complex64> {
    let taus = &traces.grid.taus;
    let h = traces.grid.spacing();
    let last = taus.len() - 1;
    taus.iter()
        .enumerate()
        .map(|(i, &tau)| {
            let w = if i == 0 || i == last { 0.5 * h } else { h };
            Complex64::from_polar(w * spec.window(tau), -tau * t)
        })
        .collect()
}

fn check_grid(traces: &CgoTraces, spec: &WindowSpec) -> Result<(), VhedError> {
    let taus = &traces.grid.taus;
    let span = taus[taus.len() - 1];
    if (span - spec.tau_max).abs() > 1e-12 || (taus[0] + spec.tau_max).abs() > 1e-12 {
        return Err(VhedError::Grid(format!("traces cover ±{span}, window expects ±{}", spec.tau_max)));
    }
    Ok(())
}

/// `ω̆^±` as `[angle][t][node]` arrays, `(plus, minus)`.
pub type Windowed = (Vec<Vec<Vec<Complex64>>>, Vec<Vec<Vec<Complex64>>>);

pub fn windowed_fourier(traces: &CgoTraces, spec: &WindowSpec) -> Result<Windowed, VhedError> {
    check_grid(traces, spec)?;
    let transform = |side: &Vec<Vec<Vec<Complex64>>>| -> Vec<Vec<Vec<Complex64>>> {
        side.iter()
            .map(|by_tau| {
                let nodes = by_tau[0].len();
                spec.t_grid
                    .iter()
                    .map(|&t| {
                        let ker = kernel(traces, spec, t);
                        (0..nodes).map(|j| ker.iter().zip(by_tau).map(|(k, w)| k * w[j]).sum()).collect()
                    })
                    .collect()
            })
            .collect()
    };
    Ok((transform(&traces.plus), transform(&traces.minus)))
}

/// `(1/2πi) Σ_j ω̆(z_j) z'(θ_j) Δθ` for every `[angle][t]`.
pub fn contour_average(windowed: &[Vec<Vec<Complex64>>], quad: &BoundaryQuadrature) -> Vec<Vec<Complex64>> {
    windowed.iter().map(|by_t| by_t.iter().map(|g| quad.contour_average(g)).collect()).collect()
}

pub fn odd_part(plus: &[Vec<Complex64>], minus: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    plus.iter().zip(minus).map(|(p, m)| p.iter().zip(m).map(|(a, b)| 0.5 * (a - b)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VhedProfile {
    pub angles: Vec<f64>,
    pub window: WindowSpec,
    /// `[angle][t]`
    pub t_odd: Vec<Vec<Complex64>>,
    pub t_plus: Vec<Vec<Complex64>>,
    pub t_minus: Vec<Vec<Complex64>>,
    pub sample_id: Option<String>,
    pub noise_level: f64,
}

impl VhedProfile {
    pub fn max_abs(&self) -> f64 {
        self.t_odd.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.t_odd.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Profile from traces. Contour averaging is done before the τ transform,
/// which by linearity equals transforming every node first.
pub fn vhed_profile(traces: &CgoTraces, quad: &BoundaryQuadrature, spec: &WindowSpec) -> Result<VhedProfile, VhedError> {
    check_grid(traces, spec)?;
    let averaged = |side: &Vec<Vec<Vec<Complex64>>>| -> Vec<Vec<Complex64>> {
        side.iter()
            .map(|by_tau| {
                let per_tau: Vec<Complex64> = by_tau.iter().map(|w| quad.contour_average(w)).collect();
                spec.t_grid
                    .iter()
                    .map(|&t| kernel(traces, spec, t).iter().zip(&per_tau).map(|(k, v)| k * v).sum())
                    .collect()
            })
            .collect()
    };
    let t_plus = averaged(&traces.plus);
    let t_minus = averaged(&traces.minus);
    Ok(VhedProfile {
        angles: traces.grid.angles.clone(),
        window: spec.clone(),
        t_odd: odd_part(&t_plus, &t_minus),
        t_plus,
        t_minus,
        sample_id: None,
        noise_level: 0.0,
    })
}

/// Per angle: 256 real parts, then 256 imaginary parts.
pub fn vhed_feature_vector(t_odd: &[Vec<Complex64>]) -> Result<Vec<f64>, VhedError> {
    let mut out = Vec::with_capacity(t_odd.len() * 2 * T_NODES);
    for (a, row) in t_odd.iter().enumerate() {
        if row.len() != T_NODES {
            return Err(VhedError::Incomplete(format!("angle {a} has {} t-nodes", row.len())));
        }
        out.extend(row.iter().map(|c| c.re));
        out.extend(row.iter().map(|c| c.im));
    }
    Ok(out)
}

pub fn unflatten_features(features: &[f64]) -> Result<Vec<Vec<Complex64>>, VhedError> {
    if features.len() % (2 * T_NODES) != 0 {
        return Err(VhedError::Incomplete(format!("length {} is not a multiple of {}", features.len(), 2 * T_NODES)));
    }
    Ok(features
        .chunks(2 * T_NODES)
        .map(|chunk| (0..T_NODES).map(|i| Complex64::new(chunk[i], chunk[T_NODES + i])).collect())
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub angles: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_nodes: usize,
    pub tau_max: f64,
    pub window_a: f64,
    pub layout: String,
    pub sample_id: Option<String>,
    pub noise_level: f64,
}

/// `T_odd` as interleaved `(re, im)` pairs, angle-major, plus sidecar.
pub fn write_profile(path: &Path, p: &VhedProfile) -> std::io::Result<()> {
    let flat: Vec<f64> = p.t_odd.iter().flatten().flat_map(|c| [c.re, c.im]).collect();
    io::write_f64(path, &flat)?;
    io::write_json(
        &io::sidecar(path),
        &ProfileMeta {
            angles: p.angles.clone(),
            t_min: p.window.t_grid[0],
            t_max: *p.window.t_grid.last().unwrap(),
            t_nodes: p.window.t_grid.len(),
            tau_max: p.window.tau_max,
            window_a: p.window.a,
            layout: "angle-major, t-minor, interleaved re/im".into(),
            sample_id: p.sample_id.clone(),
            noise_level: p.noise_level,
        },
    )
}

/// Read back `T_odd` written by [`write_profile`] as `(angles, t grid, rows)`.
pub fn read_profile(path: &Path) -> std::io::Result<(ProfileMeta, Vec<Vec<Complex64>>)> {
    let meta: ProfileMeta = io::read_json(&io::sidecar(path))?;
    let flat = io::read_f64(path)?;
    if flat.len() != 2 * meta.t_nodes * meta.angles.len() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "profile size mismatch"));
    }
    let rows = flat
        .chunks(2 * meta.t_nodes)
        .map(|c| c.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect())
        .collect();
    Ok((meta, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_spec_defaults() {
        let s = WindowSpec::new(5.0);
        assert!((s.window(5.0) - 1e-2).abs() < 1e-15);
        assert!((s.a - 0.18420680743952367).abs() < 1e-12);
        assert_eq!(s.t_grid.len(), 256);
        assert_eq!(s.t_grid[0], -3.0);
        assert!((s.t_grid[255] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn features_round_trip() {
        let rows: Vec<Vec<Complex64>> =
            (0..6).map(|a| (0..T_NODES).map(|i| Complex64::new(a as f64 + i as f64, -(i as f64))).collect()).collect();
        let f = vhed_feature_vector(&rows).unwrap();
        assert_eq!(f.len(), 3072);
        assert_eq!(f[256], 0.0);
        assert_eq!(f[257], -1.0);
        assert_eq!(unflatten_features(&f).unwrap(), rows);
    }
}
