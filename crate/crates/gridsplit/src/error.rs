//! Front-end error type with the process exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] gridsplit_core::Error),

    #[error("{0}")]
    Input(String),

    #[error("comparison failed: {0}")]
    ComparisonFailed(String),
}

impl CliError {
    /// Exit codes are a total function of the outcome class:
    /// 0 success, 1 comparison failure, 2 convergence failure, 3 input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ComparisonFailed(_) => 1,
            CliError::Core(gridsplit_core::Error::RelaxationDiverged { .. }) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
