use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("target column not found: {0:?}")]
    TargetNotFound(String),

    #[error("column to drop not found: {0:?}")]
    DropColumnNotFound(String),

    #[error("non-numeric value {value:?} in column {column:?} at data row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("no data rows in {0}")]
    EmptyData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("feature names differ between partitions")]
    FeatureMismatch,

    #[error("model {model} expects a {expected} dataset, got {got}")]
    TaskMismatch {
        model: String,
        expected: String,
        got: String,
    },

    #[error("model {0} requires non-negative features")]
    NegativeFeatures(String),

    #[error("unknown hyperparameter {key:?} for {model}")]
    UnknownHyperparam { model: String, key: String },

    #[error("hyperparameter {key} = {value} out of range for {model}: {reason}")]
    InvalidHyperparam {
        model: String,
        key: String,
        value: f64,
        reason: String,
    },

    #[error("unknown model kind {0:?}")]
    UnknownModel(String),

    #[error("score undefined: test target has zero variance")]
    UndefinedScore,

    #[error("weighted regression is degenerate after {0} attempts")]
    DegenerateRegression(usize),

    #[error("too many features for exact enumeration: {0} (max 20)")]
    TooManyFeatures(usize),

    #[error("no feature of {0} has non-zero spread; nothing to perturb")]
    NothingToPerturb(String),

    #[error("feature {0:?} not present in explanation table")]
    FeatureNotFound(String),

    #[error("explanation tables cover different instances or features")]
    TableMismatch,

    #[error("malformed explanation table: {0}")]
    MalformedTable(String),

    #[error("need at least {needed} values, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("repetition {0} produced different results from repetition 0")]
    ReplicationMismatch(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }
}
