use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {what} (expected {expected}, got {actual})")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("{path}: line {line}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    #[error("{path}: duplicate example id `{id}` on line {line}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        line: usize,
    },

    #[error("example ids do not align at row {row}: `{left}` vs `{right}`")]
    IdMismatch {
        row: usize,
        left: String,
        right: String,
    },

    #[error("{path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("training diverged for class {class} at epoch {epoch}")]
    Diverged { class: usize, epoch: usize },

    #[error("dataset has no features")]
    MissingFeatures,

    #[error("dataset has no ground-truth labels")]
    MissingTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: impl ToString, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
