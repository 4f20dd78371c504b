use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, the estimators and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("CFL violated: Courant number {courant} exceeds 1 (speed {speed}, dt {dt}, dx {dx})")]
    Cfl {
        courant: f64,
        speed: f64,
        dt: f64,
        dx: f64,
    },

    #[error("advection speed {0} must be non-positive (inflow boundary is x = 0)")]
    WrongDirection(f64),

    #[error("grid mismatch: expected {expected} nodes, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("unobservable configuration: {0}")]
    Unobservable(&'static str),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Trace {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short, stable tag for the failure class. The CLI prints it and maps it to an exit code.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Json(_) => "config",
            Error::InvalidSignal(_) => "signal",
            Error::NonFinite(_) => "numeric",
            Error::Cfl { .. } | Error::WrongDirection(_) => "cfl",
            Error::GridMismatch { .. } => "grid",
            Error::Unobservable(_) => "unobservable",
            Error::Trace { .. } => "trace",
            Error::Io { .. } | Error::Csv(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
