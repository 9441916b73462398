//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph ingestion, matrix algebra, solvers, and the
/// training pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; carries the path and 1-based line number.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A node id or matrix index was out of bounds.
    #[error("index error: {0}")]
    Index(String),

    /// Matrix or tensor dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Iteration hit the step limit before reaching the tolerance.
    #[error("did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Direct linear solve failed (singular or numerically unstable system).
    #[error("solver error: {0}")]
    Solver(String),

    /// A split could not be constructed from the given graph.
    #[error("split error: {0}")]
    Split(String),

    /// Requested more samples than the space can provide.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A metric is undefined on the given inputs (e.g. single-class labels).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Checkpoint blob was malformed or from an unsupported version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
