//! Run manifests: written before compute starts and finalized once.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub name: String,
    pub master: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    /// NDJSON lines or CSV data rows.
    pub rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub pipeline: String,
    pub check: String,
    /// NaN (serialized as null) for skipped checks.
    #[serde(deserialize_with = "nan_if_null")]
    pub statistic: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub tolerance: f64,
    pub status: CheckStatus,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl CheckRecord {
    /// Passes when `statistic ≤ tolerance`.
    pub fn at_most(pipeline: &str, check: &str, statistic: f64, tolerance: f64) -> Self {
        let status = if statistic <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { pipeline: pipeline.into(), check: check.into(), statistic, tolerance, status }
    }

    /// Passes when `statistic ≥ tolerance`.
    pub fn at_least(pipeline: &str, check: &str, statistic: f64, tolerance: f64) -> Self {
        let status = if statistic >= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { pipeline: pipeline.into(), check: check.into(), statistic, tolerance, status }
    }

    pub fn skipped(pipeline: &str, check: &str) -> Self {
        Self { pipeline: pipeline.into(), check: check.into(), statistic: f64::NAN, tolerance: f64::NAN, status: CheckStatus::Skipped }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed { stage: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub pipeline: String,
    pub stages: Vec<String>,
    pub seeds: Vec<SeedRecord>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: RunStatus,
    pub artifacts: Vec<ArtifactRecord>,
    pub checks: Vec<CheckRecord>,
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Io(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Artifact { path: path.display().to_string(), message: e.to_string() })?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Artifact { path: path.display().to_string(), message: e.to_string() })
    }

    /// The manifest with timestamps cleared, for determinism comparisons.
    pub fn without_timestamps(&self) -> Self {
        Self { started_at: 0, finished_at: None, ..self.clone() }
    }
}
