//! Summary table built from a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::manifest::{sha256_hex, CheckStatus, RunManifest, RunStatus};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct Summary {
    /// Human-readable table.
    pub table: String,
    /// `pipeline,check,statistic,tolerance,status`.
    pub csv: String,
    /// Data rows across all artifacts, recounted from disk.
    pub total_rows: usize,
}

fn count_rows(path: &str, bytes: &[u8]) -> usize {
    let lines = bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
    if path.ends_with(".csv") {
        lines.saturating_sub(1)
    } else {
        lines
    }
}

fn status_name(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::Skipped => "skipped",
    }
}

/// Read the manifest in `dir`, verify every artifact against its recorded
/// hash and row count, and tabulate the stages and checks.
pub fn emit_summary(dir: &Path) -> Result<Summary, HarnessError> {
    let manifest = RunManifest::read(dir)?;
    let mut total_rows = 0;
    let mut per_stage: Vec<(String, usize, usize)> = manifest.stages.iter().map(|s| (s.clone(), 0, 0)).collect();
    for a in &manifest.artifacts {
        let path = dir.join(&a.path);
        let bytes = std::fs::read(&path)
            .map_err(|e| HarnessError::Artifact { path: path.display().to_string(), message: e.to_string() })?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(HarnessError::Artifact { path: path.display().to_string(), message: "sha256 mismatch".into() });
        }
        let rows = count_rows(&a.path, &bytes);
        if rows != a.rows {
            return Err(HarnessError::Artifact {
                path: path.display().to_string(),
                message: format!("{rows} rows on disk, {} recorded", a.rows),
            });
        }
        total_rows += rows;
        let stage = per_stage.iter_mut().find(|(s, _, _)| {
            a.path.starts_with(s.as_str()) || (s == "gaps" && a.path.starts_with("gaps"))
        });
        if let Some(entry) = stage {
            entry.1 += 1;
            entry.2 += rows;
        }
    }

    let status = match &manifest.status {
        RunStatus::Running => "running".to_string(),
        RunStatus::Complete => "complete".to_string(),
        RunStatus::Failed { stage, message } => format!("failed in {stage}: {message}"),
    };
    let mut table = String::new();
    writeln!(table, "pipeline {} ({status}), config {}", manifest.pipeline, &manifest.config_hash[..12.min(manifest.config_hash.len())]).ok();
    writeln!(table, "{:<12} {:>9} {:>9}", "stage", "artifacts", "rows").ok();
    for (s, n, rows) in &per_stage {
        writeln!(table, "{s:<12} {n:>9} {rows:>9}").ok();
    }
    writeln!(table, "{:<12} {:>9} {:>9}", "total", manifest.artifacts.len(), total_rows).ok();
    if !manifest.checks.is_empty() {
        writeln!(table).ok();
        writeln!(table, "{:<12} {:<52} {:>12} {:>12} {:>7}", "pipeline", "check", "statistic", "tolerance", "status").ok();
    }
    let mut csv = String::from("pipeline,check,statistic,tolerance,status\n");
    for c in &manifest.checks {
        let st = status_name(c.status);
        writeln!(table, "{:<12} {:<52} {:>12.5e} {:>12.5e} {:>7}", c.pipeline, c.check, c.statistic, c.tolerance, st).ok();
        writeln!(csv, "{},\"{}\",{},{},{}", c.pipeline, c.check.replace('"', "\"\""), c.statistic, c.tolerance, st).ok();
    }
    Ok(Summary { table, csv, total_rows })
}
