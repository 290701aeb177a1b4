use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("box adjustment produced a non-finite value in `{field}`")]
    Adjustment { field: &'static str },

    #[error("no feasible assignment: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("frame timestamp {got} does not follow previous timestamp {previous}")]
    Sequencing { previous: f64, got: f64 },

    #[error("camera `{camera}` is invalid: {reason}")]
    Camera { camera: String, reason: String },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid field `{field}`: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
