use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("header is missing required column `{0}`")]
    MissingColumn(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("labels contain a single class; {0} needs both normal and anomalous samples")]
    SingleClass(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("assist round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } => true,
            Error::Round { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
