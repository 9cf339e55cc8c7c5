//! Config-driven experiment driver: TOML experiment configs, stage
//! orchestration over seed ensembles with a content-addressed checkpoint
//! cache, axis sweeps, and machine-readable JSON/CSV outputs.

pub mod cache;
pub mod config;
pub mod emit;
pub mod runner;
pub mod sweep;

use subliminal_core::data::DataError;
use subliminal_core::diagnostics::DiagError;
use subliminal_core::training::TrainError;

/// Driver-level error, split by exit code: config problems (2), data and
/// file problems (3), numerical failures (4).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::BadHyper(_) => CliError::Config(e.to_string()),
            TrainError::Data(_) | TrainError::Io(_) | TrainError::BadCheckpoint(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DiagError> for CliError {
    fn from(e: DiagError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
