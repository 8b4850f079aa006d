use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("task set {requested} is not covered by available annotations {available}")]
    UnavailableTasks { requested: String, available: String },
    #[error("invalid task set: {0}")]
    TaskSet(String),
    #[error("unknown token or task: {0}")]
    Unknown(String),
    #[error("enumeration too large: {paths} paths exceed cap {cap}")]
    TooManyPaths { paths: u128, cap: u128 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
