//! Reproducible experiment runs: a TOML config names the corpus, backends,
//! and parameters; every command reads and writes one run directory keyed
//! by the config's content hash. Replaying a command with the same config,
//! corpus, and backends reproduces its artifacts byte for byte.

pub mod commands;
pub mod config;
pub mod rundir;

use std::path::PathBuf;

pub use commands::{
    cmd_ablate, cmd_calibrate, cmd_evaluate, cmd_ingest, cmd_morph, cmd_report, strategy_label,
    AblationReport, AblationRow, CalibrateSummary, IngestSummary, MorphSummary,
};
pub use config::{RunConfig, DEFAULT_FAR_TARGETS, DEFAULT_MORPH_TEXT};
pub use rundir::RunDirectory;

use crate::asv::AsvError;
use crate::audio::AudioError;
use crate::embedding::EmbeddingError;
use crate::manifest::ManifestError;
use crate::metrics::MetricError;
use crate::pipeline::PipelineError;

/// Process exit code for each error class, after 0 for success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage = 1,
    Data = 2,
    Backend = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    /// Invalid configuration or arguments.
    #[error("{0}")]
    Usage(String),
    /// Missing or malformed corpus files and run artifacts.
    #[error("{0}")]
    Data(String),
    /// A synthesis or verification backend failed.
    #[error("{0}")]
    Backend(String),
}

impl RunnerError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RunnerError::Usage(_) => ErrorClass::Usage,
            RunnerError::Data(_) => ErrorClass::Data,
            RunnerError::Backend(_) => ErrorClass::Backend,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }

    /// Stable lowercase tag for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self.class() {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Backend => "backend",
        }
    }

    pub(crate) fn io(path: PathBuf, source: std::io::Error) -> Self {
        RunnerError::Data(format!("io error on {}: {source}", path.display()))
    }
}

impl From<ManifestError> for RunnerError {
    fn from(e: ManifestError) -> Self {
        RunnerError::Data(e.to_string())
    }
}

impl From<PipelineError> for RunnerError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { .. }
            | PipelineError::TooShort { .. }
            | PipelineError::EmptyText => RunnerError::Data(e.to_string()),
            other => RunnerError::Backend(other.to_string()),
        }
    }
}

impl From<AsvError> for RunnerError {
    fn from(e: AsvError) -> Self {
        RunnerError::Data(e.to_string())
    }
}

impl From<MetricError> for RunnerError {
    fn from(e: MetricError) -> Self {
        RunnerError::Data(e.to_string())
    }
}

impl From<AudioError> for RunnerError {
    fn from(e: AudioError) -> Self {
        RunnerError::Data(e.to_string())
    }
}

impl From<EmbeddingError> for RunnerError {
    fn from(e: EmbeddingError) -> Self {
        RunnerError::Data(e.to_string())
    }
}
