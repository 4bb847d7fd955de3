use std::path::PathBuf;

use thiserror::Error;

use crate::trajectories::Variant;

#[derive(Debug, Error)]
pub enum ClpmError {
    #[error("time {t} lies outside the observation window [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("invalid change-point grid: {0}")]
    InvalidGrid(String),

    #[error("invalid event list: {0}")]
    InvalidEvents(String),

    #[error("invalid trajectories: {0}")]
    InvalidTrajectories(String),

    #[error("operation requires the {expected} variant but the state is {found}")]
    VariantMismatch { expected: Variant, found: Variant },

    #[error("degenerate rate {rate:e} for dyad ({i}, {j}) at time {t}")]
    DegenerateRate { i: usize, j: usize, t: f64, rate: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite objective at iteration {iteration} (offending block: {block})")]
    NonFinite { iteration: usize, block: String },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, ClpmError>;
