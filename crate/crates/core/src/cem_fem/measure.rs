//! Electrode voltage synthesis and the relative noise model.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{electrode_midpoints, ConformalMap, ElectrodeMidpoint, DEFAULT_TRUNCATION};
use crate::io;
use crate::phantom::HeadPhantom;

use super::mesh::{Mesh, MeshSpec};
use super::patterns::{trig_current_patterns, CurrentPatternSet};
use super::solver::CemSolver;
use super::{CemError, DEFAULT_CONTACT_IMPEDANCE};

const NOISE_STREAM: u64 = 4;

/// Everything about the measurement device that does not depend on the patient.
#[derive(Debug, Clone)]
pub struct ForwardSetup {
    pub map: ConformalMap,
    pub layout: Vec<ElectrodeMidpoint>,
    pub patterns: CurrentPatternSet,
    pub mesh: MeshSpec,
    pub contact_impedance: f64,
}

impl ForwardSetup {
    pub fn new(semi_axes: (f64, f64), electrodes: usize, mesh: MeshSpec, contact_impedance: f64) -> Result<Self, CemError> {
        let map = if semi_axes == (1.0, 1.0) {
            ConformalMap::identity()
        } else {
            ConformalMap::disc_to_ellipse(semi_axes, DEFAULT_TRUNCATION)?
        };
        Self::with_map(map, electrodes, mesh, contact_impedance)
    }

    pub fn with_map(map: ConformalMap, electrodes: usize, mesh: MeshSpec, contact_impedance: f64) -> Result<Self, CemError> {
        if !(contact_impedance > 0.0) {
            return Err(CemError::BadImpedance);
        }
        let layout = electrode_midpoints(&map, electrodes)?;
        let patterns = trig_current_patterns(map.perimeter(), &layout);
        Ok(Self { map, layout, patterns, mesh, contact_impedance })
    }

    /// Unit disc, `M` electrodes, default mesh and impedance.
    pub fn disc(electrodes: usize) -> Result<Self, CemError> {
        Self::new((1.0, 1.0), electrodes, MeshSpec::default(), DEFAULT_CONTACT_IMPEDANCE)
    }

    pub fn electrodes(&self) -> usize {
        self.layout.len()
    }

    pub fn impedances(&self) -> Vec<f64> {
        vec![self.contact_impedance; self.electrodes()]
    }
}

/// Electrode potentials for all current patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSet {
    /// `M × (M−1)`; column `k−1` answers pattern `I^(k)`.
    pub voltages: DMatrix<f64>,
    pub noise_level: f64,
    pub noise_seed: Option<u64>,
}

impl VoltageSet {
    /// Column-major stacking `[U^(1); …; U^(M−1)]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.voltages.as_slice().to_vec()
    }

    pub fn from_stacked(electrodes: usize, stacked: &[f64]) -> Result<Self, CemError> {
        let expected = electrodes * (electrodes - 1);
        if stacked.len() != expected {
            return Err(CemError::Dimension { expected, got: stacked.len() });
        }
        Ok(Self {
            voltages: DMatrix::from_column_slice(electrodes, electrodes - 1, stacked),
            noise_level: 0.0,
            noise_seed: None,
        })
    }

    /// Copy with relative Gaussian noise of level `delta`.
    pub fn with_noise(&self, delta: f64, seed: u64) -> Result<Self, CemError> {
        let noisy = add_noise(&self.stacked(), delta, seed)?;
        let mut out = Self::from_stacked(self.voltages.nrows(), &noisy)?;
        out.noise_level = delta;
        out.noise_seed = Some(seed);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageMeta {
    pub electrodes: usize,
    pub patterns: usize,
    pub layout: String,
    pub noise_level: f64,
    pub noise_seed: Option<u64>,
    pub phantom_seed: u64,
    pub mesh_h: f64,
    pub contact_impedance: f64,
}

pub const VOLTAGE_LAYOUT: &str = "pattern-major, electrode-minor";

/// Write `set` as flat little-endian `f64` plus a JSON sidecar.
pub fn write_voltages(path: &Path, set: &VoltageSet, phantom_seed: u64, setup: &ForwardSetup) -> std::io::Result<()> {
    io::write_f64(path, &set.stacked())?;
    let meta = VoltageMeta {
        electrodes: set.voltages.nrows(),
        patterns: set.voltages.ncols(),
        layout: VOLTAGE_LAYOUT.into(),
        noise_level: set.noise_level,
        noise_seed: set.noise_seed,
        phantom_seed,
        mesh_h: setup.mesh.target_h,
        contact_impedance: setup.contact_impedance,
    };
    io::write_json(&io::sidecar(path), &meta)
}

pub fn read_voltages(path: &Path) -> std::io::Result<(VoltageSet, VoltageMeta)> {
    let meta: VoltageMeta = io::read_json(&io::sidecar(path))?;
    let data = io::read_f64(path)?;
    let mut set = VoltageSet::from_stacked(meta.electrodes, &data)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    set.noise_level = meta.noise_level;
    set.noise_seed = meta.noise_seed;
    Ok((set, meta))
}

#[derive(Debug, Clone)]
pub struct Measurements {
    /// Noise-free data for the phantom.
    pub sigma: VoltageSet,
    /// Noise-free data for `σ ≡ 1` on the same mesh.
    pub reference: VoltageSet,
    pub mesh_nodes: usize,
    pub mesh_triangles: usize,
}

impl Measurements {
    /// `U_σ − U_1`, the relative voltages.
    pub fn relative(&self) -> DMatrix<f64> {
        &self.sigma.voltages - &self.reference.voltages
    }
}

fn solve_all(solver: &CemSolver, patterns: &CurrentPatternSet) -> Result<VoltageSet, CemError> {
    let m = patterns.electrodes();
    let mut voltages = DMatrix::zeros(m, patterns.n_patterns());
    for k in 0..patterns.n_patterns() {
        let sol = solver.solve(&patterns.column(k))?;
        voltages.column_mut(k).copy_from_slice(&sol.electrode);
    }
    Ok(VoltageSet { voltages, noise_level: 0.0, noise_seed: None })
}

/// CEM data for `phantom` and for the homogeneous reference on the same mesh.
pub fn simulate_measurements(phantom: &HeadPhantom, setup: &ForwardSetup) -> Result<Measurements, CemError> {
    let mesh = Mesh::build(phantom, &setup.map, &setup.layout, setup.mesh)?;
    simulate_on_mesh(phantom, &mesh, setup)
}

pub fn simulate_on_mesh(phantom: &HeadPhantom, mesh: &Mesh, setup: &ForwardSetup) -> Result<Measurements, CemError> {
    let z = setup.impedances();
    let pattern = CemSolver::analyse(mesh, &z)?;
    let ones = vec![1.0; mesh.triangles.len()];
    let reference = solve_all(&CemSolver::with_pattern(mesh, &ones, &z, &pattern)?, &setup.patterns)?;
    let sigma_elems = mesh.conductivities(phantom);
    let sigma = if sigma_elems == ones {
        reference.clone()
    } else {
        solve_all(&CemSolver::with_pattern(mesh, &sigma_elems, &z, &pattern)?, &setup.patterns)?
    };
    Ok(Measurements { sigma, reference, mesh_nodes: mesh.n_nodes(), mesh_triangles: mesh.triangles.len() })
}

/// `V + e` with Gaussian `e` rescaled so that `‖e‖₂ = δ‖V‖₂` exactly.
pub fn add_noise(v: &[f64], delta: f64, seed: u64) -> Result<Vec<f64>, CemError> {
    if delta == 0.0 {
        return Ok(v.to_vec());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(CemError::ZeroSignal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let e: Vec<f64> = (0..v.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let en = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = delta * norm / en;
    Ok(v.iter().zip(&e).map(|(x, ei)| x + scale * ei).collect())
}
