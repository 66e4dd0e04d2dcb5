use thiserror::Error;

use crate::optimizer::TrajectoryRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A batch-size rule asked for more samples than the configured cap.
    #[error("batch budget exceeded at iteration {iteration}: {which} batch of size {requested:.3e} exceeds cap {cap}")]
    BudgetExceeded {
        iteration: usize,
        which: &'static str,
        requested: f64,
        cap: usize,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An iterate became NaN/Inf. Carries the last record that was still finite.
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        last_good: Option<Box<TrajectoryRecord>>,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
