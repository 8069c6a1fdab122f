//! A miniature end-to-end experiment: generate samples, train on raw and
//! VHED features, and write the report.
//!
//! Pass a sample count per set as the first argument (default 10).

use vhed_eit::classifier::TrainConfig;
use vhed_eit::pipeline::{emit_profile_plots, emit_report, generate_dataset, run_campaign, class_pair, ExperimentConfig, SampleSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let cfg = ExperimentConfig {
        train_samples: n,
        test_samples: n,
        noise_levels: vec![0.0, 1e-2],
        output_dir: std::env::temp_dir().join("vhed-desk-example"),
        train: TrainConfig { repetitions: 2, max_epochs: 100, ..TrainConfig::default() },
        ..ExperimentConfig::default()
    };
    let (manifest, stats) = generate_dataset(&cfg, &|done, total| {
        if done % 10 == 0 {
            eprintln!("{done}/{total}");
        }
    })?;
    println!(
        "{} samples ({} reused) in {:.1} s, mean VHED time {:.2} s",
        stats.total, stats.reused, stats.wall_seconds, stats.mean_vhed_seconds
    );
    manifest.validate()?;

    let rows = run_campaign(&manifest, &cfg.train)?;
    let files = emit_report(&rows, &cfg, &cfg.output_dir)?;
    println!("{}", std::fs::read_to_string(&files.summary)?);

    if let Some((a, b)) = class_pair(&manifest, SampleSet::Circular) {
        let plots = emit_profile_plots(&manifest, &[a, b], 0.0, &cfg.output_dir.join("plots"))?;
        println!("{} plots in {}", plots.len(), cfg.output_dir.join("plots").display());
    }
    Ok(())
}
