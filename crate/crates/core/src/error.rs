use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single problem found while reading a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub file: PathBuf,
    /// 1-based; 0 when the issue concerns the file as a whole.
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset has {} invalid record(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<ParseIssue>),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined correlation: zero variance in {0}")]
    UndefinedCorrelation(&'static str),

    #[error("performance must be positive, got {0}")]
    UndefinedPerformance(f64),

    #[error("snapshot series missing for account {0}")]
    MissingSeries(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("infeasible simulation config: {0}")]
    InfeasibleConfig(String),

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

    /// True for errors caused by bad input data rather than by a computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Io { .. } | Error::Json(_))
    }
}
