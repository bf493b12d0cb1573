//! Error types shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between data ingestion and posterior output.
#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky factorization failed even after jitter escalation.
    #[error("cholesky factorization of {context} failed after jitter escalation")]
    DecompositionFailure {
        /// Names the offending matrix (e.g. "posterior precision at column 17").
        context: String,
    },

    /// Degrees of freedom too small for the matrix dimension.
    #[error("invalid degrees of freedom {dof} for dimension {dim} (need dof > dim - 1)")]
    InvalidDof { dof: f64, dim: usize },

    /// A scalar parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A time index outside the range an operation supports.
    #[error("time index {index} out of range: {reason}")]
    OutOfRange { index: usize, reason: String },

    /// A window or history buffer is too short for the AR lag set.
    #[error("insufficient history: need more than {needed} columns, have {actual}")]
    InsufficientHistory { needed: usize, actual: usize },

    /// Invalid run or window configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A missing-data specification that cannot be realized.
    #[error("infeasible missing spec: {0}")]
    InfeasibleSpec(String),

    /// Accuracy metric undefined for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Matrix file parse failure with 1-based line and field position.
    #[error("parse error at line {line}, field {field}: {message}")]
    Parse {
        line: usize,
        field: usize,
        message: String,
    },

    /// Filesystem failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Failure inside a Gibbs sweep, annotated with the iteration index.
    #[error("chain iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Failure inside an incremental window, annotated with the window index.
    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the Gibbs iteration it occurred in.
    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::Chain {
            iteration,
            source: Box::new(self),
        }
    }

    /// Wrap an error with the window index it occurred in.
    pub fn at_window(self, window: usize) -> Self {
        Error::Window {
            window,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DecompositionFailure { .. }
            | Error::InvalidDof { .. }
            | Error::InvalidParameter(_) => true,
            Error::Chain { source, .. } | Error::Window { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
