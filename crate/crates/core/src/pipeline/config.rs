//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cgo_bie::{self, DEFAULT_BOUNDARY_NODES, DEFAULT_MODES, DEFAULT_N_TAU, DEFAULT_TAU_MAX};
use crate::classifier::TrainConfig;
use crate::phantom::{TissueDistributions, DEFAULT_PERTURBATION};

use super::PipelineError;

/// Full-scale sample counts divided by this give the desk defaults.
pub const DESK_SCALE_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train_samples: usize,
    /// Samples in each of the three test sets (full scale 1000).
    pub test_samples: usize,
    pub noise_levels: Vec<f64>,
    pub electrodes: usize,
    pub electrode_coverage: f64,
    pub mesh_h: f64,
    pub contact_impedance: f64,
    pub perturbation: f64,
    pub tissues: TissueDistributions,
    pub tau_max: f64,
    pub n_tau: usize,
    pub angles: Vec<f64>,
    /// Window sharpness; `None` gives `W_a(τ_m) = 10⁻²`.
    pub window_a: Option<f64>,
    pub boundary_nodes: usize,
    pub n_modes: usize,
    pub train: TrainConfig,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Declared reduction from the full-scale experiment.
    pub scale_factor: usize,
    /// Generation fails when more than this fraction of samples fail.
    pub max_failure_fraction: f64,
    /// Worker threads for sample generation and training; 0 uses all cores.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_samples: 4000 / DESK_SCALE_FACTOR,
            test_samples: 200,
            noise_levels: vec![0.0, 1e-3, 1e-2],
            electrodes: 65,
            electrode_coverage: 0.5,
            mesh_h: 0.02,
            contact_impedance: crate::cem_fem::DEFAULT_CONTACT_IMPEDANCE,
            perturbation: DEFAULT_PERTURBATION,
            tissues: TissueDistributions::default(),
            tau_max: DEFAULT_TAU_MAX,
            n_tau: DEFAULT_N_TAU,
            angles: cgo_bie::default_angles(),
            window_a: None,
            boundary_nodes: DEFAULT_BOUNDARY_NODES,
            n_modes: DEFAULT_MODES,
            train: TrainConfig::default(),
            master_seed: 2024,
            output_dir: PathBuf::from("vhed-out"),
            scale_factor: DESK_SCALE_FACTOR,
            max_failure_fraction: 0.02,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.train_samples < 10 || self.test_samples < 10 {
            return Err(PipelineError::Config(format!(
                "sample counts must be at least 10 (train {}, test {})",
                self.train_samples, self.test_samples
            )));
        }
        self.validate_settings()
    }

    /// Everything except the sample counts.
    pub fn validate_settings(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("noise levels must be a non-empty list of non-negative numbers".into());
        }
        if self.electrodes < 5 || self.electrodes % 2 == 0 {
            return bad(format!("electrode count must be odd and at least 5, got {}", self.electrodes));
        }
        if self.n_modes == 0 || self.n_modes > (self.electrodes - 1) / 2 {
            return bad(format!("n_modes must be in 1..={}", (self.electrodes - 1) / 2));
        }
        if !(self.mesh_h > 0.0 && self.mesh_h < 0.5) || !(self.electrode_coverage > 0.0 && self.electrode_coverage < 1.0) {
            return bad("mesh_h must be in (0, 0.5) and electrode coverage in (0, 1)".into());
        }
        if !(self.contact_impedance > 0.0) {
            return bad("contact impedance must be positive".into());
        }
        if !(self.tau_max > 0.0) || self.n_tau < 17 || self.n_tau % 2 == 0 || self.angles.is_empty() {
            return bad("need tau_max > 0, odd n_tau >= 17 and at least one angle".into());
        }
        if self.boundary_nodes < 17 || self.boundary_nodes % 2 == 0 {
            return bad("boundary_nodes must be odd and at least 17".into());
        }
        if let Some(a) = self.window_a {
            if !(a > 0.0) {
                return bad("window_a must be positive".into());
            }
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max_failure_fraction must be in [0, 1]".into());
        }
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// SHA-256 of the settings that determine the generated data.
    pub fn data_hash(&self) -> String {
        let mut c = self.clone();
        c.train = TrainConfig::default();
        c.output_dir = PathBuf::new();
        c.threads = 0;
        c.max_failure_fraction = 0.0;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
