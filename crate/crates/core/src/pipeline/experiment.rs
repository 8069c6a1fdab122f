//! Training campaigns on raw voltages or VHED features.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem_fem::read_voltages;
use crate::classifier::{
    evaluate, read_checkpoint, train_scg, write_checkpoint, write_log, Metrics, MlpParams, Standardizer, TrainConfig,
    Trained,
};
use crate::io;
use crate::vhed::{read_profile, vhed_feature_vector};

use super::dataset::{DatasetManifest, SampleSet};
use super::{io_err, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Noisy absolute electrode voltages.
    Raw,
    /// Real and imaginary parts of `T_odd`.
    Vhed,
}

impl InputKind {
    pub const ALL: [InputKind; 2] = [InputKind::Raw, InputKind::Vhed];

    pub fn name(self) -> &'static str {
        match self {
            InputKind::Raw => "raw",
            InputKind::Vhed => "vhed",
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InputKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(InputKind::Raw),
            "vhed" => Ok(InputKind::Vhed),
            other => Err(PipelineError::Config(format!("unknown input kind {other:?} (expected raw or vhed)"))),
        }
    }
}

/// Feature matrix (one row per complete sample), labels and sample ids.
pub struct Features {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub ids: Vec<String>,
}

pub fn load_features(
    manifest: &DatasetManifest,
    set: SampleSet,
    kind: InputKind,
    delta: f64,
) -> Result<Features, PipelineError> {
    let root = manifest.root();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for r in manifest.records_in(set).filter(|r| r.is_complete()) {
        let v = r
            .variant(delta)
            .ok_or_else(|| PipelineError::Missing(format!("{} has no data for delta {delta}", r.id)))?;
        let row = match kind {
            InputKind::Raw => {
                let path = v.voltages.resolve(root);
                read_voltages(&path).map_err(io_err(&path))?.0.stacked()
            }
            InputKind::Vhed => {
                let path = v.profile.resolve(root);
                vhed_feature_vector(&read_profile(&path).map_err(io_err(&path))?.1)?
            }
        };
        rows.push(row);
        y.push(r.label());
        ids.push(r.id.clone());
    }
    if rows.is_empty() {
        return Err(PipelineError::Missing(format!("no complete samples in {}", set.name())));
    }
    let n = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(PipelineError::Missing(format!("{} has {} features, expected {n}", ids[bad], rows[bad].len())));
    }
    let x = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    Ok(Features { x, y, ids })
}

/// Networks trained on one `(input kind, δ)` combination.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub kind: InputKind,
    pub delta: f64,
    pub standardizer: Standardizer,
    pub models: Vec<Trained>,
}

/// `cfg.repetitions` independent trainings; repetition `r` uses seed
/// `cfg.seed + r` for both initialisation and shuffling.
pub fn train_repetitions(x: &DMatrix<f64>, y: &[f64], cfg: &TrainConfig) -> Result<Vec<Trained>, PipelineError> {
    cfg.validate()?;
    (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let init = MlpParams::random(x.ncols(), cfg.init_scale, seed);
            Ok(train_scg(&init, x, y, &TrainConfig { seed, ..*cfg })?)
        })
        .collect()
}

/// Train on the training set at noise level `delta`. Features are
/// standardised with training-set statistics.
pub fn train_models(
    manifest: &DatasetManifest,
    kind: InputKind,
    delta: f64,
    cfg: &TrainConfig,
) -> Result<TrainedModels, PipelineError> {
    let train = load_features(manifest, SampleSet::Train, kind, delta)?;
    let standardizer = Standardizer::fit(&train.x)?;
    let x = standardizer.apply(&train.x)?;
    let models = train_repetitions(&x, &train.y, cfg)?;
    Ok(TrainedModels { kind, delta, standardizer, models })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelsMeta {
    kind: InputKind,
    delta: f64,
    repetitions: usize,
    standardizer: Standardizer,
}

pub fn models_dir(root: &Path, kind: InputKind, delta: f64) -> std::path::PathBuf {
    root.join("models").join(format!("{}_delta{delta:e}", kind.name()))
}

/// Checkpoints, training logs and the standardiser under `dir`.
pub fn save_models(dir: &Path, models: &TrainedModels) -> Result<(), PipelineError> {
    for (r, t) in models.models.iter().enumerate() {
        let p = dir.join(format!("rep{r}.f64"));
        write_checkpoint(&p, &t.params).map_err(io_err(&p))?;
        let p = dir.join(format!("rep{r}_log.csv"));
        write_log(&p, &t.log).map_err(io_err(&p))?;
    }
    let meta = ModelsMeta {
        kind: models.kind,
        delta: models.delta,
        repetitions: models.models.len(),
        standardizer: models.standardizer.clone(),
    };
    let p = dir.join("models.json");
    io::write_json(&p, &meta).map_err(io_err(&p))
}

/// Inverse of [`save_models`]; training logs are not read back.
pub fn load_models(dir: &Path) -> Result<TrainedModels, PipelineError> {
    let p = dir.join("models.json");
    let meta: ModelsMeta = io::read_json(&p).map_err(io_err(&p))?;
    let models = (0..meta.repetitions)
        .map(|r| Ok(Trained { params: read_checkpoint(&dir.join(format!("rep{r}.f64")))?, log: Vec::new() }))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(TrainedModels { kind: meta.kind, delta: meta.delta, standardizer: meta.standardizer, models })
}

/// Mean and standard deviation over repetitions of one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test_set: SampleSet,
    pub input: InputKind,
    pub delta: f64,
    pub repetitions: usize,
    pub test_samples: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub sensitivity_mean: f64,
    pub sensitivity_std: f64,
    pub specificity_mean: f64,
    pub specificity_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl ReportRow {
    fn from_metrics(test_set: SampleSet, input: InputKind, delta: f64, test_samples: usize, m: &[Metrics]) -> Self {
        let (accuracy_mean, accuracy_std) = mean_std(&m.iter().map(|x| x.accuracy).collect::<Vec<_>>());
        let (sensitivity_mean, sensitivity_std) = mean_std(&m.iter().map(|x| x.sensitivity).collect::<Vec<_>>());
        let (specificity_mean, specificity_std) = mean_std(&m.iter().map(|x| x.specificity).collect::<Vec<_>>());
        Self {
            test_set,
            input,
            delta,
            repetitions: m.len(),
            test_samples,
            accuracy_mean,
            accuracy_std,
            sensitivity_mean,
            sensitivity_std,
            specificity_mean,
            specificity_std,
        }
    }
}

/// Evaluate every network on all three test sets at the models' noise level.
pub fn evaluate_models(manifest: &DatasetManifest, models: &TrainedModels) -> Result<Vec<ReportRow>, PipelineError> {
    SampleSet::TESTS
        .iter()
        .map(|&set| {
            let test = load_features(manifest, set, models.kind, models.delta)?;
            let x = models.standardizer.apply(&test.x)?;
            let metrics = models
                .models
                .iter()
                .map(|t| evaluate(&t.params, &x, &test.y, 0.5))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ReportRow::from_metrics(set, models.kind, models.delta, test.y.len(), &metrics))
        })
        .collect()
}

/// Train `cfg.repetitions` networks and report one row per test set.
pub fn run_experiment(
    manifest: &DatasetManifest,
    kind: InputKind,
    delta: f64,
    cfg: &TrainConfig,
) -> Result<Vec<ReportRow>, PipelineError> {
    evaluate_models(manifest, &train_models(manifest, kind, delta, cfg)?)
}

/// Every `(input kind, δ)` of the manifest's config, with models saved
/// under `<output_dir>/models`.
pub fn run_campaign(manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let mut rows = Vec::new();
    for &delta in &manifest.config.noise_levels {
        for kind in InputKind::ALL {
            let models = train_models(manifest, kind, delta, cfg)?;
            save_models(&models_dir(manifest.root(), kind, delta), &models)?;
            rows.extend(evaluate_models(manifest, &models)?);
        }
    }
    Ok(rows)
}

/// Ids of the first complete sample of each class in `set`.
pub fn class_pair(manifest: &DatasetManifest, set: SampleSet) -> Option<(String, String)> {
    let first = |label: f64| manifest.records_in(set).find(|r| r.is_complete() && r.label() == label).map(|r| r.id.clone());
    Some((first(0.0)?, first(1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_constant_is_zero() {
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn input_kind_parses() {
        assert_eq!("vhed".parse::<InputKind>().unwrap(), InputKind::Vhed);
        assert!("both".parse::<InputKind>().is_err());
    }
}
