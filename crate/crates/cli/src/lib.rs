//! Batch driver for ground-state preparation, windowed evolution and
//! spectral analysis.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed input: {0}")]
    Input(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(#[from] ibc_core::Error),
    #[error("{stage} stage: numerical failure: {source}")]
    Stage {
        stage: &'static str,
        source: ibc_core::Error,
    },
}

impl CliError {
    /// 0 success, 1 configuration or missing input, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Stage { .. } => 2,
            _ => 1,
        }
    }

    /// Attach the stage name to numerical errors.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            CliError::Numerical(source) => CliError::Stage { stage, source },
            other => other,
        }
    }
}
