//! Conformal map from the unit disc onto the elliptic helmet domain.
//!
//! The map is an odd polynomial with real coefficients,
//!
//! ```text
//! Ψ(z) = c₁ z + c₃ z³ + … + c_{2p-1} z^{2p-1},   c₁ > 0,
//! ```
//!
//! fitted by Gauss–Newton so that `Ψ(e^{iθ})` lies on `x²/a² + y²/b² = 1`.
//! The symmetry of the ellipse forces the odd, real form, and `Ψ(0) = 0`,
//! `Ψ'(0) > 0` fix the gauge.
//!
//! Arc length along `∂Ω` is measured counter-clockwise from `Ψ(1) = (a, 0)`.

use crate::spectral::{self, TrigInterpolant};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Number of disc angles at which `s(θ)` and `|Ψ'(e^{iθ})|` are tabulated.
pub const TABLE_NODES: usize = 1024;

/// Default number of odd coefficients in the fitted series.
pub const DEFAULT_TRUNCATION: usize = 32;

/// Helmet semi-axes `(x, y)` used for every head phantom.
pub const HELMET_SEMI_AXES: (f64, f64) = (0.85, 1.0);

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("semi-axes must be positive, got ({0}, {1})")]
    DegenerateAxes(f64, f64),
    #[error("truncation order {0} is below the minimum of 8")]
    TruncationTooLow(usize),
    #[error("series fit did not converge: boundary deviation {achieved:.3e} > {target:.3e}")]
    NonConvergence { achieved: f64, target: f64 },
    #[error("boundary correspondence is not monotone (min |Ψ'| = {0:.3e})")]
    NotBijective(f64),
    #[error("need at least {min} nodes, got {got}")]
    InsufficientNodes { min: usize, got: usize },
    #[error("need an odd electrode count >= 3, got {0}")]
    BadElectrodeCount(usize),
}

/// Disc-to-ellipse conformal map with tabulated boundary correspondence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalMap {
    semi_axes: (f64, f64),
    /// `c₁, c₃, c₅, …`
    coefficients: Vec<f64>,
    /// `s(θ_j)` at `θ_j = 2πj/TABLE_NODES`.
    arc_table: Vec<f64>,
    /// `|Ψ'(e^{iθ_j})|`.
    deriv_table: Vec<f64>,
    perimeter: f64,
    fit_deviation: f64,
    #[serde(skip)]
    speed: Option<TrigInterpolant>,
}

impl ConformalMap {
    /// The identity map of the unit disc.
    pub fn identity() -> Self {
        Self::from_coefficients((1.0, 1.0), vec![1.0], 0.0)
    }

    /// Fit `Ψ: D → Ω` for the ellipse with the given semi-axes.
    pub fn disc_to_ellipse(semi_axes: (f64, f64), truncation_order: usize) -> Result<Self, GeometryError> {
        let (a, b) = semi_axes;
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::DegenerateAxes(a, b));
        }
        if truncation_order < 8 {
            return Err(GeometryError::TruncationTooLow(truncation_order));
        }
        let target = 1e-6 * a.min(b);
        if (a - b).abs() < 1e-15 {
            let mut c = vec![0.0; truncation_order];
            c[0] = a;
            return Ok(Self::from_coefficients(semi_axes, c, 0.0));
        }

        let p = truncation_order;
        let nfit = (8 * p).max(512);
        let thetas = spectral::nodes(nfit);
        let mut c = vec![0.0; p];
        c[0] = 0.5 * (a + b);

        let mut best = f64::INFINITY;
        for _ in 0..100 {
            let mut jac = DMatrix::<f64>::zeros(nfit, p);
            let mut res = DVector::<f64>::zeros(nfit);
            for (row, &t) in thetas.iter().enumerate() {
                let (mut x, mut y) = (0.0, 0.0);
                for (j, cj) in c.iter().enumerate() {
                    let (s, co) = ((2 * j + 1) as f64 * t).sin_cos();
                    x += cj * co;
                    y += cj * s;
                }
                res[row] = x * x / (a * a) + y * y / (b * b) - 1.0;
                for j in 0..p {
                    let (s, co) = ((2 * j + 1) as f64 * t).sin_cos();
                    jac[(row, j)] = 2.0 * x / (a * a) * co + 2.0 * y / (b * b) * s;
                }
            }
            let rmax = res.amax();
            let step = jac
                .svd(true, true)
                .solve(&res, 1e-14)
                .expect("svd computed with both factors");
            for (cj, dj) in c.iter_mut().zip(step.iter()) {
                *cj -= dj;
            }
            if step.amax() < 1e-15 || (rmax >= best * 0.999 && rmax < 1e-9) {
                break;
            }
            best = best.min(rmax);
        }

        let map = Self::from_coefficients(semi_axes, c, 0.0);
        let deviation = map.max_boundary_deviation(4 * TABLE_NODES);
        if deviation > target || !deviation.is_finite() {
            return Err(GeometryError::NonConvergence { achieved: deviation, target });
        }
        let min_speed = map.deriv_table.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_speed <= 0.0 || map.arc_table.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::NotBijective(min_speed));
        }
        Ok(Self { fit_deviation: deviation, ..map })
    }

    fn from_coefficients(semi_axes: (f64, f64), coefficients: Vec<f64>, fit_deviation: f64) -> Self {
        let mut map = Self {
            semi_axes,
            coefficients,
            arc_table: Vec::new(),
            deriv_table: Vec::new(),
            perimeter: 0.0,
            fit_deviation,
            speed: None,
        };
        map.deriv_table = spectral::nodes(TABLE_NODES)
            .iter()
            .map(|&t| map.derivative(Complex64::from_polar(1.0, t)).norm())
            .collect();
        let speed = TrigInterpolant::new(&map.deriv_table);
        map.perimeter = 2.0 * PI * speed.mean();
        map.arc_table = spectral::nodes(TABLE_NODES)
            .iter()
            .map(|&t| speed.integral_from_zero(t))
            .collect();
        map.speed = Some(speed);
        map
    }

    fn speed(&self) -> TrigInterpolant {
        match &self.speed {
            Some(s) => s.clone(),
            None => TrigInterpolant::new(&self.deriv_table),
        }
    }

    /// Restore the interpolant after deserialisation.
    pub fn rehydrate(mut self) -> Self {
        if self.speed.is_none() {
            self.speed = Some(TrigInterpolant::new(&self.deriv_table));
        }
        self
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        self.semi_axes
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn arc_table(&self) -> &[f64] {
        &self.arc_table
    }

    pub fn deriv_table(&self) -> &[f64] {
        &self.deriv_table
    }

    /// Max distance of fitted boundary points from the ellipse.
    pub fn fit_deviation(&self) -> f64 {
        self.fit_deviation
    }

    /// Total length `L` of `∂Ω`.
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn is_disc(&self) -> bool {
        (self.semi_axes.0 - self.semi_axes.1).abs() < 1e-15
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let z2 = z * z;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coefficients.iter().rev() {
            acc = acc * z2 + c;
        }
        acc * z
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let z2 = z * z;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in self.coefficients.iter().enumerate().rev() {
            acc = acc * z2 + c * (2 * j + 1) as f64;
        }
        acc
    }

    pub fn boundary_point(&self, theta: f64) -> Complex64 {
        self.eval(Complex64::from_polar(1.0, theta))
    }

    /// `dz/dθ = i e^{iθ} Ψ'(e^{iθ})` along the boundary.
    pub fn boundary_dz(&self, theta: f64) -> Complex64 {
        let x = Complex64::from_polar(1.0, theta);
        Complex64::i() * x * self.derivative(x)
    }

    /// `|Ψ'(e^{iθ})|`, the arc-length speed in the disc angle.
    pub fn boundary_speed(&self, theta: f64) -> f64 {
        self.derivative(Complex64::from_polar(1.0, theta)).norm()
    }

    /// Arc coordinate `s(θ)` (not reduced mod `L`).
    pub fn arc_at(&self, theta: f64) -> f64 {
        match &self.speed {
            Some(s) => s.integral_from_zero(theta),
            None => self.speed().integral_from_zero(theta),
        }
    }

    /// Inverse of [`arc_at`](Self::arc_at) by Newton iteration.
    pub fn theta_at_arc(&self, s: f64) -> f64 {
        let mut theta = 2.0 * PI * s / self.perimeter;
        for _ in 0..50 {
            let f = self.arc_at(theta) - s;
            let step = f / self.boundary_speed(theta);
            theta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        theta
    }

    /// Largest distance from `Ψ(e^{iθ})` to the target ellipse over `n` angles.
    pub fn max_boundary_deviation(&self, n: usize) -> f64 {
        let (a, b) = self.semi_axes;
        spectral::nodes(n)
            .into_iter()
            .map(|t| {
                let w = self.boundary_point(t);
                let f = w.re * w.re / (a * a) + w.im * w.im / (b * b) - 1.0;
                let g = 2.0 * ((w.re / (a * a)).powi(2) + (w.im / (b * b)).powi(2)).sqrt();
                (f / g).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Electrode midpoint on `∂Ω` together with its disc pre-image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeMidpoint {
    /// `θ_m = 2πm/M`, `m = 1..=M`.
    pub theta: f64,
    pub point: [f64; 2],
    /// Arc coordinate `s_m ∈ (0, L]`.
    pub arc: f64,
    /// `|Ψ'(x_m)|`.
    pub weight: f64,
}

/// Midpoints `y_m = Ψ(e^{iθ_m})` for `M` electrodes.
pub fn electrode_midpoints(map: &ConformalMap, m: usize) -> Result<Vec<ElectrodeMidpoint>, GeometryError> {
    if m < 3 || m % 2 == 0 {
        return Err(GeometryError::BadElectrodeCount(m));
    }
    Ok((1..=m)
        .map(|idx| {
            let theta = 2.0 * PI * idx as f64 / m as f64;
            let p = map.boundary_point(theta);
            ElectrodeMidpoint {
                theta,
                point: [p.re, p.im],
                arc: map.arc_at(theta),
                weight: map.boundary_speed(theta),
            }
        })
        .collect())
}

/// Arc-length parametrisation `γ: (0, L] → ∂Ω` sampled at `nodes` points.
#[derive(Debug, Clone)]
pub struct BoundaryParametrization {
    /// `s_j = jL/n`, `j = 0..n`.
    pub arcs: Vec<f64>,
    pub points: Vec<Complex64>,
    /// Unit tangents `γ'(s_j)`.
    pub tangents: Vec<Complex64>,
    /// Disc angles `θ(s_j)`.
    pub thetas: Vec<f64>,
    pub total_length: f64,
}

impl BoundaryParametrization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.total_length / self.points.len() as f64
    }
}

pub fn arc_parametrization(map: &ConformalMap, nodes: usize) -> Result<BoundaryParametrization, GeometryError> {
    if nodes < 256 {
        return Err(GeometryError::InsufficientNodes { min: 256, got: nodes });
    }
    let length = map.perimeter();
    let mut out = BoundaryParametrization {
        arcs: Vec::with_capacity(nodes),
        points: Vec::with_capacity(nodes),
        tangents: Vec::with_capacity(nodes),
        thetas: Vec::with_capacity(nodes),
        total_length: length,
    };
    for j in 0..nodes {
        let s = length * j as f64 / nodes as f64;
        let theta = map.theta_at_arc(s);
        let dz = map.boundary_dz(theta);
        out.arcs.push(s);
        out.thetas.push(theta);
        out.points.push(map.boundary_point(theta));
        out.tangents.push(dz / dz.norm());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_is_the_disc() {
        let m = ConformalMap::disc_to_ellipse((1.0, 1.0), 8).unwrap();
        assert!((m.perimeter() - 2.0 * PI).abs() < 1e-12);
        for &d in m.deriv_table() {
            assert!((d - 1.0).abs() < 1e-14);
        }
        let z = Complex64::new(0.3, -0.2);
        assert!((m.eval(z) - z).norm() < 1e-15);
    }

    #[test]
    fn helmet_map_fits_and_is_normalised() {
        let m = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, DEFAULT_TRUNCATION).unwrap();
        assert!(m.fit_deviation() < 0.85e-6);
        assert_eq!(m.eval(Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        let d0 = m.derivative(Complex64::new(0.0, 0.0));
        assert!(d0.re > 0.0 && d0.im == 0.0);
        assert!(m.deriv_table().iter().all(|&d| d > 0.0));
        assert!(m.arc_table().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            ConformalMap::disc_to_ellipse((0.0, 1.0), 16),
            Err(GeometryError::DegenerateAxes(..))
        ));
        assert!(matches!(
            ConformalMap::disc_to_ellipse((0.9, 1.0), 4),
            Err(GeometryError::TruncationTooLow(4))
        ));
        let m = ConformalMap::identity();
        assert!(electrode_midpoints(&m, 64).is_err());
        assert!(arc_parametrization(&m, 100).is_err());
    }

    #[test]
    fn theta_arc_round_trip() {
        let m = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, 24).unwrap();
        for s in [0.1, 1.0, 2.5, 5.0] {
            let t = m.theta_at_arc(s);
            assert!((m.arc_at(t) - s).abs() < 1e-12);
        }
    }
}
