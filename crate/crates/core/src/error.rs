use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("header does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("timestamps are not strictly increasing at row {row}")]
    NonMonotonicTimestamps { row: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("every variable was dropped; dataset is empty")]
    EmptyDataset,
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("variable {0} has no observed values")]
    AllMasked(usize),
    #[error("specific energy undefined: weight {0} <= 0")]
    UndefinedSpecificEnergy(f64),
    #[error("cycle {0} missing from label file")]
    MissingCycleId(usize),
    #[error("label file references unknown cycle {0}")]
    UnknownCycleId(usize),
    #[error("need at least {needed} cycles, got {got}")]
    TooFewCycles { needed: usize, got: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient samples: {got} usable rows, need {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("conditioning set is singular (collinear columns)")]
    DegenerateConditioning,
    #[error("gaussian process solve failed: {0}")]
    GpSolve(String),
    #[error("adjacency structures disagree: {0}")]
    UniverseMismatch(String),
    #[error("causal pair ({0}, {1}) absent from every graph")]
    PairAbsent(usize, usize),
    #[error("unstable SCM: {0}")]
    UnstableSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnstableSpec(_) => ErrorKind::Config,
            Error::Json(_) | Error::GpSolve(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
