use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is singular (min eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenNotConverged { iterations: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample group {id:?} has {count} samples, at least 2 are required")]
    InsufficientSamples { id: String, count: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("pair ({i}, {j})")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("distance matrix with metric {0} is not symmetric and cannot be kernelized")]
    MetricNotSymmetric(String),

    #[error("kernel bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The message followed by every underlying cause, `: `-separated.
    pub fn full_message(&self) -> String {
        let mut msg = self.to_string();
        let mut cause = std::error::Error::source(self);
        while let Some(c) = cause {
            msg.push_str(": ");
            msg.push_str(&c.to_string());
            cause = c.source();
        }
        msg
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_pair(self, i: usize, j: usize) -> Self {
        Error::Pair {
            i,
            j,
            source: Box::new(self),
        }
    }
}
