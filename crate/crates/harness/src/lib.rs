//! Configuration-driven experiment runner for `covdbm`.

pub mod config;
pub mod manifest;
pub mod run;
pub mod summary;

pub use covdbm;

pub use config::{ExperimentConfig, InitialSource, Pipeline};
pub use manifest::{ArtifactRecord, CheckRecord, CheckStatus, RunManifest, RunStatus, SeedRecord};
pub use run::{load_initial_data, run_experiment};
pub use summary::{emit_summary, Summary};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: covdbm::Error },
}

impl HarnessError {
    /// Process exit code: 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Stage { source, .. } if source.is_numeric() => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
