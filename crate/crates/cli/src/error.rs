use std::path::PathBuf;

use spoc_core::SpocError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    /// Count cells are reported 1-based, as they appear in the file.
    #[error("malformed count {value} at row {row}, column {col}: {why}")]
    BadCount {
        row: usize,
        col: usize,
        value: String,
        why: &'static str,
    },

    #[error("document {row} has no words")]
    EmptyDocument { row: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] SpocError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
