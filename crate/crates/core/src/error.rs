use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the formula being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid search window: {0}")]
    InvalidSearch(String),

    #[error("no feasible chi in the initial bracket [{lo}, {hi}]")]
    NoFeasibleChi { lo: f64, hi: f64 },

    #[error("{field} must be strictly positive, found minimum {min:e}")]
    Positivity { field: &'static str, min: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("v dropped below floor at t={t}: min v = {min_v:e} < {floor:e}")]
    VFloor { t: f64, min_v: f64, floor: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("samples are not uniformly spaced in time: {0}")]
    NonUniformSpacing(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("malformed data: {0}")]
    Parse(String),
}
