use thiserror::Error;

use crate::sdp::{IterationRecord, LiftedSolution};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the operation's domain (bad lengths, out-of-range delays, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The sampling-grid convention does not fit the requested operation.
    #[error("indexing convention error: {0}")]
    Convention(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The data constraint cannot be met by any lifted matrix.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    /// ADMM hit its iteration cap. The last iterate and the residual history
    /// are kept so callers can still score or inspect it.
    #[error(
        "solver did not converge in {iterations} iterations \
         (primal {primal:.3e}, dual {dual:.3e}, gap {gap:.3e}{})",
        if *stalled { ", residual plateau" } else { "" }
    )]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
        stalled: bool,
        history: Vec<IterationRecord>,
        last: Box<LiftedSolution>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
