use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error in {path} at byte offset {offset}: {message}")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("absolute continuity violated at index {index}: p = {p} > 0 but q = 0")]
    AbsoluteContinuity { index: usize, p: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("candidate mapping family is empty")]
    EmptyFamily,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
