use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("empty text after preprocessing")]
    EmptyText,
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("reduction error: class {class} has {available} records, {needed} needed")]
    Reduction {
        class: String,
        available: usize,
        needed: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported DQI component {0}")]
    UnsupportedComponent(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector: {0}")]
    ZeroVector(String),
    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),
    #[error("missing record {id} in provider {provider}")]
    MissingRecord { provider: String, id: String },
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run failed during {stage}: {msg}")]
    RunFailed { stage: String, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
