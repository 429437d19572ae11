use std::path::PathBuf;

use patchdyn_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(
                Error::Explosion { .. }
                | Error::NumericalZero { .. }
                | Error::NonIntegrable(_)
                | Error::NoRoot
                | Error::DeterministicReduction
                | Error::EmptyPath,
            ) => 2,
            CliError::Io(_) | CliError::Csv(_) => 2,
            _ => 1,
        }
    }
}
