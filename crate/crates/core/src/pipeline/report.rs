//! Comma-separated results and a Markdown summary with one table per test set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::dataset::SampleSet;
use super::experiment::{InputKind, ReportRow};
use super::{io_err, ExperimentConfig, PipelineError};
use crate::io;

pub const CSV_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "report.md";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

fn header(cfg: &ExperimentConfig, repetitions: usize) -> String {
    format!(
        "scale factor {} ({} training samples, {} per test set), {} repetitions, M = {}, master seed {}",
        cfg.scale_factor, cfg.train_samples, cfg.test_samples, repetitions, cfg.electrodes, cfg.master_seed
    )
}

fn csv(rows: &[ReportRow], head: &str) -> String {
    let mut s = format!("# {head}\n");
    s.push_str(
        "test_set,input,delta,repetitions,test_samples,accuracy_mean,accuracy_std,sensitivity_mean,sensitivity_std,specificity_mean,specificity_std\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:e},{},{},{},{},{},{},{},{}",
            r.test_set.name(),
            r.input.name(),
            r.delta,
            r.repetitions,
            r.test_samples,
            r.accuracy_mean,
            r.accuracy_std,
            r.sensitivity_mean,
            r.sensitivity_std,
            r.specificity_mean,
            r.specificity_std
        );
    }
    s
}

fn table_title(set: SampleSet) -> &'static str {
    match set {
        SampleSet::Circular => "Circular-inclusion test set",
        SampleSet::Elliptic => "Elliptic-inclusion test set",
        SampleSet::Multiple => "Multiple-inclusion test set",
        SampleSet::Train => "Training set",
    }
}

fn cell(mean: f64, std: f64, bold: bool) -> String {
    let text = format!("{mean:.3} ± {std:.3}");
    if bold { format!("**{text}**") } else { text }
}

fn summary(rows: &[ReportRow], head: &str) -> String {
    let mut s = format!("# Stroke classification results\n\n{head}\n");
    let mut deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    for set in SampleSet::TESTS {
        let in_set: Vec<&ReportRow> = rows.iter().filter(|r| r.test_set == set).collect();
        if in_set.is_empty() {
            continue;
        }
        let _ = write!(
            s,
            "\n## {}\n\n| δ | input | accuracy | sensitivity | specificity |\n|---|---|---|---|---|\n",
            table_title(set)
        );
        for &delta in &deltas {
            let case: Vec<&ReportRow> = in_set.iter().copied().filter(|r| r.delta == delta).collect();
            let best = case.iter().map(|r| r.accuracy_mean).fold(f64::NEG_INFINITY, f64::max);
            for kind in InputKind::ALL {
                for r in case.iter().filter(|r| r.input == kind) {
                    let _ = writeln!(
                        s,
                        "| {delta} | {} | {} | {} | {} |",
                        kind.name(),
                        cell(r.accuracy_mean, r.accuracy_std, r.accuracy_mean == best),
                        cell(r.sensitivity_mean, r.sensitivity_std, false),
                        cell(r.specificity_mean, r.specificity_std, false)
                    );
                }
            }
        }
    }
    s.push_str("\nMean ± standard deviation over repetitions; bold marks the best accuracy per noise level.\n");
    s
}

/// Write `report.csv` and `report.md` into `dir`. Output depends only on
/// the rows and config, so re-emission gives identical bytes.
pub fn emit_report(rows: &[ReportRow], cfg: &ExperimentConfig, dir: &Path) -> Result<ReportFiles, PipelineError> {
    if rows.is_empty() {
        return Err(PipelineError::Missing("no result rows to report".into()));
    }
    if let Some(r) = rows.iter().find(|r| !r.accuracy_mean.is_finite() || r.repetitions == 0) {
        return Err(PipelineError::Missing(format!("row for {} / {} has no valid metrics", r.test_set.name(), r.input)));
    }
    let head = header(cfg, rows[0].repetitions);
    let files = ReportFiles { csv: dir.join(CSV_FILE), summary: dir.join(SUMMARY_FILE) };
    io::write_atomic(&files.csv, csv(rows, &head).as_bytes()).map_err(io_err(&files.csv))?;
    io::write_atomic(&files.summary, summary(rows, &head).as_bytes()).map_err(io_err(&files.summary))?;
    Ok(files)
}

pub const ROWS_FILE: &str = "results.json";

pub fn write_rows(dir: &Path, rows: &[ReportRow]) -> Result<(), PipelineError> {
    let p = dir.join(ROWS_FILE);
    io::write_json(&p, &rows).map_err(io_err(&p))
}

pub fn read_rows(dir: &Path) -> Result<Vec<ReportRow>, PipelineError> {
    let p = dir.join(ROWS_FILE);
    io::read_json(&p).map_err(io_err(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(set: SampleSet, input: InputKind, delta: f64, acc: f64) -> ReportRow {
        ReportRow {
            test_set: set,
            input,
            delta,
            repetitions: 5,
            test_samples: 200,
            accuracy_mean: acc,
            accuracy_std: 0.01,
            sensitivity_mean: acc,
            sensitivity_std: 0.0,
            specificity_mean: acc,
            specificity_std: 0.0,
        }
    }

    #[test]
    fn eighteen_rows_give_three_tables_and_are_idempotent() {
        let mut rows = Vec::new();
        for set in SampleSet::TESTS {
            for d in [0.0, 1e-3, 1e-2] {
                rows.push(row(set, InputKind::Raw, d, 0.9));
                rows.push(row(set, InputKind::Vhed, d, 0.95));
            }
        }
        let dir = std::env::temp_dir().join(format!("vhed-report-{}", std::process::id()));
        let cfg = ExperimentConfig::default();
        let files = emit_report(&rows, &cfg, &dir).unwrap();
        let a = (std::fs::read(&files.csv).unwrap(), std::fs::read(&files.summary).unwrap());
        emit_report(&rows, &cfg, &dir).unwrap();
        let b = (std::fs::read(&files.csv).unwrap(), std::fs::read(&files.summary).unwrap());
        assert_eq!(a, b);
        let md = String::from_utf8(a.1).unwrap();
        assert_eq!(md.matches("\n## ").count(), 3);
        assert_eq!(md.matches("**0.950 ± 0.010**").count(), 9);
        assert!(md.contains("scale factor 10"));
        assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 20);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_rows_are_rejected() {
        let dir = std::env::temp_dir();
        assert!(emit_report(&[], &ExperimentConfig::default(), &dir).is_err());
    }
}
