//! Command-line front end for dataset generation, training and reporting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use vhed_eit::io;
use vhed_eit::pipeline::{
    class_pair, emit_profile_plots, emit_report, evaluate_models, generate_dataset, load_features, load_models,
    models_dir, open_manifest, read_rows, replay_check, save_models, train_models, write_rows, DatasetManifest,
    ExperimentConfig, InputKind, PipelineError, SampleSet,
};

#[derive(Parser)]
#[command(name = "vhed-eit", version, about = "Simulated EIT stroke classification with VHED features")]
struct Cli {
    #[command(flatten)]
    opts: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirror the config file; values from `--config` take precedence.
#[derive(Args)]
struct ConfigFlags {
    /// JSON experiment config; its entries override the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    train_samples: Option<usize>,
    #[arg(long, global = true)]
    test_samples: Option<usize>,
    /// Comma-separated relative noise levels.
    #[arg(long, global = true, value_delimiter = ',')]
    noise_levels: Option<Vec<f64>>,
    #[arg(long, global = true)]
    electrodes: Option<usize>,
    #[arg(long, global = true)]
    mesh_h: Option<f64>,
    #[arg(long, global = true)]
    contact_impedance: Option<f64>,
    #[arg(long, global = true)]
    tau_max: Option<f64>,
    #[arg(long, global = true)]
    n_tau: Option<usize>,
    #[arg(long, global = true)]
    boundary_nodes: Option<usize>,
    #[arg(long, global = true)]
    n_modes: Option<usize>,
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate phantoms, voltages, DN matrices and VHED profiles.
    Generate,
    /// Export a feature matrix for one set and noise level.
    Features {
        /// raw or vhed
        kind: InputKind,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// train, circular, elliptic or multiple
        #[arg(long, default_value = "train")]
        set: String,
        /// Output `.f64` file; a `.json` sidecar holds shape, ids and labels.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the networks; without --kind/--delta every combination.
    Train {
        #[arg(long)]
        kind: Option<InputKind>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Evaluate trained networks on the three test sets.
    Evaluate,
    /// Write report.csv and report.md from the evaluation results.
    Report,
    /// SVG plots of T_odd for the given samples (default: one pair per class).
    Plot {
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate samples and compare them byte by byte with the stored ones.
    ReplayCheck {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

fn set_field(map: &mut serde_json::Map<String, Value>, key: &str, v: Option<Value>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v);
    }
}

fn build_config(f: &ConfigFlags) -> Result<ExperimentConfig, PipelineError> {
    let to = |e: serde_json::Error| PipelineError::Config(e.to_string());
    let mut value = serde_json::to_value(ExperimentConfig::default()).map_err(to)?;
    let map = value.as_object_mut().expect("config is an object");
    set_field(map, "output_dir", f.output_dir.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned())));
    set_field(map, "train_samples", f.train_samples.map(Value::from));
    set_field(map, "test_samples", f.test_samples.map(Value::from));
    set_field(map, "noise_levels", f.noise_levels.clone().map(Value::from));
    set_field(map, "electrodes", f.electrodes.map(Value::from));
    set_field(map, "mesh_h", f.mesh_h.map(Value::from));
    set_field(map, "contact_impedance", f.contact_impedance.map(Value::from));
    set_field(map, "tau_max", f.tau_max.map(Value::from));
    set_field(map, "n_tau", f.n_tau.map(Value::from));
    set_field(map, "boundary_nodes", f.boundary_nodes.map(Value::from));
    set_field(map, "n_modes", f.n_modes.map(Value::from));
    set_field(map, "master_seed", f.master_seed.map(Value::from));
    set_field(map, "threads", f.threads.map(Value::from));
    if let Some(train) = map.get_mut("train").and_then(Value::as_object_mut) {
        set_field(train, "repetitions", f.repetitions.map(Value::from));
        set_field(train, "max_epochs", f.max_epochs.map(Value::from));
    }
    if let Some(path) = &f.config {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        merge(&mut value, file);
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(to)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Overlay `top` onto `base`, recursing into objects.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

fn parse_set(s: &str) -> Result<SampleSet, PipelineError> {
    match s {
        "train" => Ok(SampleSet::Train),
        "circular" | "test-circular" => Ok(SampleSet::Circular),
        "elliptic" | "test-elliptic" => Ok(SampleSet::Elliptic),
        "multiple" | "test-multiple" => Ok(SampleSet::Multiple),
        other => Err(PipelineError::Config(format!("unknown sample set {other:?}"))),
    }
}

fn manifest_for(cfg: &ExperimentConfig) -> Result<DatasetManifest, PipelineError> {
    let m = open_manifest(&cfg.output_dir)?;
    if m.config_hash != cfg.data_hash() {
        eprintln!("warning: manifest was generated with different data settings; using the manifest's");
    }
    Ok(m)
}

fn combos(cfg: &ExperimentConfig, kind: Option<InputKind>, delta: Option<f64>) -> Vec<(InputKind, f64)> {
    let kinds: Vec<InputKind> = kind.map(|k| vec![k]).unwrap_or_else(|| InputKind::ALL.to_vec());
    let deltas: Vec<f64> = delta.map(|d| vec![d]).unwrap_or_else(|| cfg.noise_levels.clone());
    deltas.iter().flat_map(|&d| kinds.iter().map(move |&k| (k, d))).collect()
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = build_config(&cli.opts)?;
    let root = cfg.output_dir.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Generate => {
            let report = |done: usize, total: usize| {
                if done % 10 == 0 || done == total {
                    eprintln!("{done}/{total} samples");
                }
            };
            let (manifest, stats) = generate_dataset(&cfg, &report)?;
            println!(
                "{} samples ({} generated, {} reused, {} failed) in {:.1} s; VHED per sample and noise level: mean {:.2} s, max {:.2} s",
                manifest.records.len(),
                stats.generated,
                stats.reused,
                stats.failed,
                stats.wall_seconds,
                stats.mean_vhed_seconds,
                stats.max_vhed_seconds
            );
            Ok(())
        }
        Command::Features { kind, delta, set, out } => {
            let manifest = manifest_for(&cfg)?;
            let f = load_features(&manifest, parse_set(&set)?, kind, delta)?;
            let flat: Vec<f64> = (0..f.x.nrows()).flat_map(|i| f.x.row(i).iter().copied().collect::<Vec<_>>()).collect();
            io::write_f64(&out, &flat).map_err(pipeline_io(&out))?;
            let meta = serde_json::json!({
                "rows": f.x.nrows(), "cols": f.x.ncols(), "layout": "row-major, one row per sample",
                "kind": kind, "delta": delta, "ids": f.ids, "labels": f.y,
            });
            let side = io::sidecar(&out);
            io::write_json(&side, &meta).map_err(pipeline_io(&side))?;
            println!("{} × {} features written to {}", f.x.nrows(), f.x.ncols(), out.display());
            Ok(())
        }
        Command::Train { kind, delta } => {
            let manifest = manifest_for(&cfg)?;
            for (k, d) in combos(&cfg, kind, delta) {
                let models = train_models(&manifest, k, d, &cfg.train)?;
                let dir = models_dir(&root, k, d);
                save_models(&dir, &models)?;
                let epochs: Vec<usize> = models.models.iter().map(|t| t.log.len()).collect();
                println!("{k} δ={d}: {} networks, epochs {epochs:?} -> {}", models.models.len(), dir.display());
            }
            Ok(())
        }
        Command::Evaluate => {
            let manifest = manifest_for(&cfg)?;
            let mut rows = Vec::new();
            for (k, d) in combos(&cfg, None, None) {
                let dir = models_dir(&root, k, d);
                if !dir.join("models.json").exists() {
                    return Err(PipelineError::Missing(format!("no trained models in {}", dir.display())));
                }
                rows.extend(evaluate_models(&manifest, &load_models(&dir)?)?);
            }
            for r in &rows {
                println!(
                    "{:<14} {:<4} δ={:<6} accuracy {:.3} sensitivity {:.3} specificity {:.3}",
                    r.test_set.name(),
                    r.input.name(),
                    r.delta,
                    r.accuracy_mean,
                    r.sensitivity_mean,
                    r.specificity_mean
                );
            }
            write_rows(&root, &rows)
        }
        Command::Report => {
            let files = emit_report(&read_rows(&root)?, &cfg, &root)?;
            println!("{}\n{}", files.csv.display(), files.summary.display());
            Ok(())
        }
        Command::Plot { ids, delta, out } => {
            let manifest = manifest_for(&cfg)?;
            let ids = if ids.is_empty() {
                let (a, b) = class_pair(&manifest, SampleSet::Circular)
                    .ok_or_else(|| PipelineError::Missing("no complete pair of classes to plot".into()))?;
                vec![a, b]
            } else {
                ids
            };
            let out = out.unwrap_or_else(|| root.join("plots"));
            let files = emit_profile_plots(&manifest, &ids, delta, &out)?;
            println!("{} plots in {}", files.len(), out.display());
            Ok(())
        }
        Command::ReplayCheck { count } => {
            let manifest = manifest_for(&cfg)?;
            let r = replay_check(&manifest, count)?;
            if r.is_identical() {
                println!("{} samples, {} files: identical", r.checked_samples, r.checked_files);
                Ok(())
            } else {
                Err(PipelineError::Replay(r.mismatches.join(", ")))
            }
        }
    })
}

fn pipeline_io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { context: path.display().to_string(), source }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
