use std::io;

use thiserror::Error;

/// Errors produced by the solvers, models and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observed loss {loss} exceeds the solver's loss bound {bound}")]
    LossAboveBound { loss: f64, bound: f64 },

    #[error("no runtime observations for algorithm {0}; fall back to uniform allocation")]
    NoObservations(usize),

    #[error("runtime distribution already reached 1 at elapsed time {0}")]
    AlreadySolved(f64),

    #[error("instance {0} cannot be solved by any algorithm")]
    Unsolvable(String),

    #[error("failed to launch `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },

    #[error("every algorithm failed on instance {0}")]
    AllFailed(String),

    #[error("line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("trace format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
