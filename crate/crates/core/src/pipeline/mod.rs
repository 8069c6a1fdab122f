//! Dataset generation, training campaigns, reports and plots.
//!
//! A run writes one directory per sample under `<output_dir>/samples`, a
//! `manifest.json` listing every sample, and report/plot files next to it.

mod config;
mod dataset;
mod experiment;
mod plot;
mod replay;
mod report;

pub use config::{ExperimentConfig, DESK_SCALE_FACTOR};
pub use dataset::{
    derive_seed, generate_dataset, generate_samples, noise_seed, open_manifest, process_sample, sample_id, DatasetManifest, FeatureContext,
    FileRef, GenerationStats, NoiseVariant, SampleRecord, SampleSet, SampleStatus, SampleTiming, MANIFEST_FILE,
};
pub use experiment::{
    class_pair, evaluate_models, load_features, load_models, models_dir, run_campaign, run_experiment, save_models,
    train_models, train_repetitions, Features, InputKind, ReportRow, TrainedModels,
};
pub use plot::{emit_profile_plots, overlay_svg, profile_svg, Series};
pub use replay::{replay_check, ReplayReport};
pub use report::{emit_report, read_rows, write_rows, ReportFiles, CSV_FILE, ROWS_FILE, SUMMARY_FILE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Phantom(#[from] crate::phantom::PhantomError),
    #[error(transparent)]
    Cem(#[from] crate::cem_fem::CemError),
    #[error(transparent)]
    Mimic(#[from] crate::dn_mimic::MimicError),
    #[error(transparent)]
    Bie(#[from] crate::cgo_bie::BieError),
    #[error(transparent)]
    Vhed(#[from] crate::vhed::VhedError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error("{failed} of {total} samples failed, above the allowed fraction")]
    BatchFailure { failed: usize, total: usize },
    #[error("missing data: {0}")]
    Missing(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
}

impl PipelineError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::BatchFailure { .. } => 2,
            _ => 1,
        }
    }
}

/// Attach a path to an I/O error.
pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { context: path.display().to_string(), source }
}
