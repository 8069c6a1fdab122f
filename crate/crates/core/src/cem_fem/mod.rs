//! Complete Electrode Model forward problem.
//!
//! Piecewise-linear finite elements on a ring mesh ([`mesh`]), trigonometric
//! current patterns ([`patterns`]), the factorised CEM system ([`solver`]) and
//! measurement synthesis with noise ([`measure`]).

pub mod measure;
pub mod mesh;
pub mod patterns;
pub mod solver;

use thiserror::Error;

pub use measure::{
    add_noise, read_voltages, simulate_measurements, simulate_on_mesh, write_voltages, ForwardSetup, Measurements, VoltageMeta,
    VoltageSet,
};
pub use mesh::{Mesh, MeshSpec, RegionTag};
pub use patterns::{trig_basis, trig_current_patterns, CurrentPatternSet};
pub use solver::{CemSolution, CemSolver};

/// Default contact impedance, identical for every electrode.
pub const DEFAULT_CONTACT_IMPEDANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CemError {
    #[error("invalid mesh parameters: target_h={0}, coverage={1}")]
    BadMeshSpec(f64, f64),
    #[error("mesh generation failed: {0}")]
    Mesh(String),
    #[error("contact impedances must be positive")]
    BadImpedance,
    #[error("current pattern does not sum to zero (sum {0:e})")]
    NotConserved(f64),
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular CEM system: {0}")]
    Singular(#[from] crate::sparse::SparseError),
    #[error("cannot add relative noise to a zero voltage vector")]
    ZeroSignal,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}
