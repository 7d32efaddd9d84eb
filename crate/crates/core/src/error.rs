use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The invariant state has infinite support (no central capacity).
    #[error("invariant state has infinite support when p = 0")]
    InfiniteSupport,

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("truncation dimension {trunc_dim} is too small for support {support}")]
    Truncation { trunc_dim: usize, support: usize },

    #[error("numerical blow-up at t = {time}")]
    NumericalBlowup { time: f64 },

    #[error("no convergence within horizon {horizon}: final distance {distance:e}")]
    NonConvergence { horizon: f64, distance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_state(msg: impl Into<String>) -> Error {
    Error::InvalidState(msg.into())
}
