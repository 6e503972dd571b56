use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("label {label} out of range for {n_classes} classes (sample {index})")]
    Label {
        label: usize,
        n_classes: usize,
        index: usize,
    },

    #[error("non-finite value {value} in {location}")]
    Numeric { location: String, value: f64 },

    #[error("stream error: {0}")]
    Stream(String),

    #[error("state error: {0}")]
    State(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("experience {index}: {source}")]
    Experience {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_experience(self, index: usize) -> Self {
        match self {
            e @ Error::Experience { .. } => e,
            other => Error::Experience {
                index,
                source: Box::new(other),
            },
        }
    }
}
