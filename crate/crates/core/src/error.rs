use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HpcaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HpcaError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("degenerate basis: column {column} is numerically dependent on the previous ones")]
    DegenerateBasis { column: usize },

    #[error("matrix is not symmetric: max |c_ij - c_ji| = {max_diff:e}")]
    Asymmetric { max_diff: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("protocol error: {0}")]
    Protocol(&'static str),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HpcaError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        HpcaError::Shape {
            op,
            lhs: format!("{}x{}", lhs.0, lhs.1),
            rhs: format!("{}x{}", rhs.0, rhs.1),
        }
    }

    pub(crate) fn len_mismatch(op: &'static str, expected: usize, got: usize) -> Self {
        HpcaError::Shape {
            op,
            lhs: format!("expected length {expected}"),
            rhs: format!("got {got}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HpcaError::Io {
            path: path.into(),
            source,
        }
    }
}
