use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape parameter must be positive and finite, got {0}")]
    InvalidShapeParameter(f64),

    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate {set} node at index {second} (coincides with index {first} within {tol:e})")]
    DuplicateNode {
        set: &'static str,
        first: usize,
        second: usize,
        tol: f64,
    },

    #[error("boundary normal {index} has length {length}, not unit")]
    NonUnitNormal { index: usize, length: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("h_target {h} gives {count} nodes on a boundary component (need at least {min})")]
    TooCoarse { h: f64, count: usize, min: usize },

    #[error("empty node set")]
    EmptyNodeSet,

    #[error("no sample at point {0:?}")]
    MissingPoint(Vec<f64>),

    #[error("data length mismatch: expected {expected} values, got {found}")]
    DataLength { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error(
        "Cholesky factorization of {block} failed at pivot {index} of {size}; \
         try a positive jitter (e.g. {suggested_jitter:e})"
    )]
    Factorization {
        block: &'static str,
        index: usize,
        size: usize,
        suggested_jitter: f64,
    },

    #[error("zero denominator in relative error")]
    ZeroDenominator,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
