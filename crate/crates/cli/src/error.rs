use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

/// A failed command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or unusable input (missing file, parse failure): exit 2.
    #[error("{0}")]
    Input(String),
    /// Failure while computing or writing results: exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn input(path: &Path, e: impl Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn runtime(what: impl Display, e: impl Display) -> Self {
        CliError::Runtime(format!("{what}: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
