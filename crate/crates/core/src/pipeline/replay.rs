//! Regenerate samples from the master seed and compare byte by byte.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::dataset::{process_sample, DatasetManifest, FeatureContext, FileRef};
use super::{io_err, PipelineError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub checked_samples: usize,
    pub checked_files: usize,
    /// Relative paths whose bytes differ.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn scratch_dir() -> PathBuf {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    std::env::temp_dir().join(format!("vhed-replay-{}-{nanos}", std::process::id()))
}

/// Regenerate the first `count` samples of the manifest in a scratch
/// directory and compare every file they reference.
pub fn replay_check(manifest: &DatasetManifest, count: usize) -> Result<ReplayReport, PipelineError> {
    let scratch = scratch_dir();
    let result = replay_into(manifest, count, &scratch);
    let _ = std::fs::remove_dir_all(&scratch);
    result
}

fn replay_into(manifest: &DatasetManifest, count: usize, scratch: &std::path::Path) -> Result<ReplayReport, PipelineError> {
    let mut cfg = manifest.config.clone();
    cfg.output_dir = scratch.to_path_buf();
    let ctx = FeatureContext::new(&cfg)?;
    let mut report = ReplayReport { checked_samples: 0, checked_files: 0, mismatches: Vec::new() };
    for rec in manifest.records.iter().take(count) {
        let (fresh, _) = process_sample(&ctx, &cfg, rec.set, rec.index)?;
        report.checked_samples += 1;
        if fresh.status != rec.status || fresh.seed != rec.seed {
            report.mismatches.push(format!("{}: record differs", rec.id));
            continue;
        }
        let refs = |r: &super::SampleRecord| -> Vec<FileRef> {
            r.phantom
                .iter()
                .chain(&r.reference)
                .chain(r.variants.iter().flat_map(|v| [&v.voltages, &v.dn, &v.profile]))
                .cloned()
                .collect()
        };
        for (old, new) in refs(rec).iter().zip(refs(&fresh)) {
            let a_path = old.resolve(manifest.root());
            let b_path = new.resolve(scratch);
            let a = std::fs::read(&a_path).map_err(io_err(&a_path))?;
            let b = std::fs::read(&b_path).map_err(io_err(&b_path))?;
            report.checked_files += 1;
            if a != b || old.path != new.path {
                report.mismatches.push(old.path.clone());
            }
        }
    }
    Ok(report)
}
