use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {malformed} of {total} lines malformed (limit {limit:.2}%), first bad lines: {lines:?}")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        limit: f64,
        lines: Vec<usize>,
    },

    #[error("check-in record {record} references unknown poi_id {poi_id:?}")]
    UnknownPoi { poi_id: String, record: usize },

    #[error("dataset exhausted by filters")]
    DatasetExhausted,

    #[error("user {user:?} has {count} check-ins, at least {min} required")]
    TooFewCheckins { user: String, count: usize, min: usize },

    #[error("user {0:?} has no training check-ins")]
    UnknownUser(String),

    #[error("empty group: {0}")]
    EmptyGroup(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
