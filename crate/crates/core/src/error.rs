use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation refused: {0}")]
    Refused(String),

    /// Broken internal invariant; never caused by user input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the error stems from a broken internal invariant rather
    /// than from user input or the environment.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}
