//! Small end-to-end runs of dataset generation, replay and the command-line tool.

use std::path::PathBuf;
use std::process::Command;

use vhed_eit::phantom::StrokeClass;
use vhed_eit::pipeline::{generate_samples, load_features, open_manifest, replay_check, ExperimentConfig, InputKind, SampleSet};

fn small_config(name: &str) -> ExperimentConfig {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    ExperimentConfig {
        electrodes: 33,
        n_modes: 16,
        mesh_h: 0.04,
        noise_levels: vec![0.0, 1e-2],
        output_dir: dir,
        ..ExperimentConfig::default()
    }
}

const JOBS: [(SampleSet, usize); 4] = [(SampleSet::Train, 0), (SampleSet::Train, 1), (SampleSet::Circular, 0), (SampleSet::Circular, 1)];

#[test]
fn generation_is_balanced_resumable_and_replayable() {
    let cfg = small_config("pipeline-smoke");
    let (manifest, stats) = generate_samples(&cfg, &JOBS, &|_, _| {}).unwrap();
    assert_eq!((stats.generated, stats.reused, stats.failed), (4, 0, 0));
    for set in [SampleSet::Train, SampleSet::Circular] {
        let classes: Vec<StrokeClass> = manifest.records_in(set).map(|r| r.class).collect();
        assert_eq!(classes.iter().filter(|&&c| c == StrokeClass::Hemorrhagic).count(), 1);
        assert_eq!(classes.len(), 2);
    }
    assert!(manifest.records.iter().all(|r| r.is_complete() && r.variants.len() == 2));

    let (again, stats) = generate_samples(&cfg, &JOBS, &|_, _| {}).unwrap();
    assert_eq!((stats.generated, stats.reused), (0, 4));
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&manifest).unwrap());

    let opened = open_manifest(&cfg.output_dir).unwrap();
    let report = replay_check(&opened, 2).unwrap();
    assert!(report.is_identical(), "mismatches: {:?}", report.mismatches);
    assert!(report.checked_files > 0);

    let raw = load_features(&opened, SampleSet::Train, InputKind::Raw, 1e-2).unwrap();
    assert_eq!(raw.x.shape(), (2, 33 * 32));
    let vhed = load_features(&opened, SampleSet::Circular, InputKind::Vhed, 0.0).unwrap();
    assert_eq!(vhed.x.shape(), (2, 6 * 256 * 2));
    assert!(vhed.x.iter().all(|v| v.is_finite()));
    let clean = load_features(&opened, SampleSet::Train, InputKind::Raw, 0.0).unwrap();
    assert_ne!(clean.x, raw.x);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vhed-eit")).args(args).output().unwrap()
}

#[test]
fn invalid_configuration_exits_with_code_one() {
    let out = cli(&["--electrodes", "4", "generate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));

    let out = cli(&["--config", "/nonexistent/vhed.json", "report"]);
    assert_eq!(out.status.code(), Some(1));

    let out = cli(&["--train-samples", "3", "generate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_data_is_reported() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline-empty");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let out = cli(&["--output-dir", dir.to_str().unwrap(), "evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
