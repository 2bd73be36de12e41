use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] mono_split::Error),

    #[error("every trial diverged: {0}")]
    AllDiverged(String),

    #[error("{} propert{} failed: {}", .0.len(), if .0.len() == 1 { "y" } else { "ies" }, .0.join(", "))]
    PropertyFailure(Vec<String>),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(mono_split::Error::Config(_)) => 2,
            CliError::AllDiverged(_) => 3,
            CliError::PropertyFailure(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
