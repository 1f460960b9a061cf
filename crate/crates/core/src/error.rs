//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad template, bad hyperparameter, unknown key).
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset loading or format problem.
    #[error("data error: {0}")]
    Data(String),

    /// An API contract was violated by the caller (shape mismatch, wrong mode).
    #[error("usage error: {0}")]
    Usage(String),

    /// Internal state does not permit the operation (e.g. unevaluated member).
    #[error("state error: {0}")]
    State(String),

    /// A decoded architecture has a spatial dimension below one pixel.
    #[error("infeasible architecture: {0}")]
    Infeasible(String),

    /// A non-finite value appeared in a numeric pipeline.
    #[error("numeric error in {layer}: {detail}")]
    Numeric { layer: String, detail: String },

    /// Fitness evaluation failed for a specific genome.
    #[error("evaluation error for genome [{genome}]: {source}")]
    Evaluation {
        genome: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Process exit code for the CLI: 1 config, 2 data, 3 evaluation.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Evaluation { .. } => 3,
            _ => 1,
        }
    }
}
