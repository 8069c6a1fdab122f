//! Trigonometric current patterns in the arc-length basis.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::geometry::ElectrodeMidpoint;

/// Orthonormal arc-length basis function `φ_k` on a curve of length `L`.
///
/// Odd `k` gives `cos(nks)`, even `k` gives `sin(nks)` with harmonic
/// `n = ⌈k/2⌉`; `k = 0` is the constant `1/√L`.
pub fn trig_basis(k: usize, length: f64, s: f64) -> f64 {
    if k == 0 {
        return 1.0 / length.sqrt();
    }
    let n = k.div_ceil(2) as f64;
    let arg = n * 2.0 * PI * s / length;
    let amp = (2.0 / length).sqrt();
    if k % 2 == 1 {
        amp * arg.cos()
    } else {
        amp * arg.sin()
    }
}

/// Harmonic number `⌈k/2⌉` of basis index `k ≥ 1`.
pub fn harmonic(k: usize) -> usize {
    k.div_ceil(2)
}

#[derive(Debug, Clone)]
pub struct CurrentPatternSet {
    /// `M × (M−1)`; column `k−1` is `I^(k)`.
    pub currents: DMatrix<f64>,
    pub length: f64,
    pub arcs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CurrentPatternSet {
    pub fn electrodes(&self) -> usize {
        self.currents.nrows()
    }

    pub fn n_patterns(&self) -> usize {
        self.currents.ncols()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.currents.column(k).iter().copied().collect()
    }
}

/// `I^(k) = (2π/M)(w_k − mean(w_k))`, `(w_k)_m = φ_k(s_m)|Ψ'(x_m)|`.
pub fn trig_current_patterns(length: f64, layout: &[ElectrodeMidpoint]) -> CurrentPatternSet {
    let m = layout.len();
    let mut currents = DMatrix::zeros(m, m - 1);
    for k in 1..m {
        let w: Vec<f64> = layout.iter().map(|e| trig_basis(k, length, e.arc) * e.weight).collect();
        let mean = w.iter().sum::<f64>() / m as f64;
        for (i, wi) in w.iter().enumerate() {
            currents[(i, k - 1)] = 2.0 * PI / m as f64 * (wi - mean);
        }
    }
    CurrentPatternSet {
        currents,
        length,
        arcs: layout.iter().map(|e| e.arc).collect(),
        weights: layout.iter().map(|e| e.weight).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{electrode_midpoints, ConformalMap, HELMET_SEMI_AXES};

    #[test]
    fn disc_sine_pattern() {
        let map = ConformalMap::identity();
        let layout = electrode_midpoints(&map, 65).unwrap();
        let set = trig_current_patterns(map.perimeter(), &layout);
        assert_eq!(set.currents.shape(), (65, 64));
        let scale = 2.0 * PI / 65.0 * (1.0 / PI).sqrt();
        for (m, e) in layout.iter().enumerate() {
            let want = scale * e.arc.sin();
            assert!((set.currents[(m, 1)] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn columns_sum_to_zero_and_are_independent() {
        let map = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, 32).unwrap();
        let layout = electrode_midpoints(&map, 65).unwrap();
        let set = trig_current_patterns(map.perimeter(), &layout);
        for k in 0..64 {
            assert!(set.currents.column(k).sum().abs() < 1e-14);
        }
        let sv = set.currents.clone().svd(false, false).singular_values;
        assert!(sv.min() > 1e-3 * sv.max());
    }
}
