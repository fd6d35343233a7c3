//! Error types shared across the crate.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum OnsepError {
    #[error("missing dataset file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unmapped candidate: {0}")]
    Mapping(String),
    /// Transport-level scorer failure. Retryable.
    #[error("scorer backend error: {0}")]
    Backend(String),
    /// The scorer answered but violated the wire contract. Not retryable.
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("prediction failed: {0}")]
    Prediction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OnsepError {
    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        OnsepError::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, OnsepError>;
