use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cosetap::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration and identifiability problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) | CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    /// Short machine-readable category for stderr.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(cosetap::Error::NotIdentifiable { .. } | cosetap::Error::UncoveredPairs { .. }) => {
                "identifiability"
            }
            CliError::Core(_) | CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
