use thiserror::Error;

use crate::grid::Image;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The lagged-diffusivity loop hit its iteration cap. The last iterate is
    /// kept so callers can still report a partial result.
    #[error("no convergence after {iterations} iterations (last relative change {last_change:e})")]
    ConvergenceFailure {
        iterations: usize,
        last_change: f64,
        last: Box<Image>,
    },

    #[error("dense matrix of order {n} exceeds the capacity limit {cap}")]
    Capacity { n: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
