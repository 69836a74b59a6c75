use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The alternating dual search hit its iteration cap. The best primal
    /// iterate found so far is carried along for diagnostics.
    #[error("dual search did not converge after {iterations} rounds (multiplier change {last_change:e})")]
    SolverNonConvergence {
        iterations: usize,
        last_change: f64,
        best_iterate: Vec<f64>,
    },

    #[error("failed to parse config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
