//! Staged pipeline over transaction data: synthetic data generation, path
//! tracing, feature selection, segmentation, model training, streaming
//! prediction, evaluation and intention reports.

use std::path::{Path, PathBuf};

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use config::{FeatureMode, PipelineConfig};
pub use pipeline::{Pipeline, STAGES};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing {artifact}: run {stage} first")]
    MissingStage { stage: String, artifact: PathBuf },
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 2 for usage and configuration, 4 for numeric
    /// failures, 3 for everything data related.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 4,
            _ => 3,
        }
    }
}
