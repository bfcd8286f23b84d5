use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the filtering, oracle and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("potential is not finite (log-potential {log_potential}) at state {state}, perturbation {perturbation}")]
    NonFinitePotential {
        log_potential: f64,
        state: f64,
        perturbation: f64,
    },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("particle weights are unavailable; call `reweight` before using the filter flow")]
    WeightsUnavailable,

    #[error("genealogy row for time {row} is not held in the window (oldest {oldest}, newest {newest})")]
    RowNotInWindow { row: usize, oldest: usize, newest: usize },

    #[error("index {index} out of range (allowed {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),

    #[error("model is not tractable for this operation: {0}")]
    ModelNotTractable(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidParams(_)
            | Error::InvalidLevel(_)
            | Error::IndexOutOfRange { .. }
            | Error::Json(_) => 2,
            Error::NonFinitePotential { .. }
            | Error::DegenerateWeights(_)
            | Error::WeightsUnavailable
            | Error::RowNotInWindow { .. }
            | Error::NumericalUnderflow(_)
            | Error::ModelNotTractable(_) => 3,
            Error::Io { .. } | Error::Csv(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
