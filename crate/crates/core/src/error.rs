use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PipeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipeError {
    #[error("invalid {field}: {value}")]
    InvalidDate { field: &'static str, value: i64 },

    #[error("projection error: {0}")]
    Projection(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("character {ch:?} at offset {offset} is not in the vocabulary")]
    Vocabulary { ch: char, offset: usize },

    #[error("could not parse forecast: {0}")]
    Parse(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipeError::Config(_) | PipeError::Vocabulary { .. } => 2,
            PipeError::Divergence(_) => 4,
            _ => 3,
        }
    }
}
