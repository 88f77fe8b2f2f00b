use std::io;

use thiserror::Error;

/// Errors produced by the editing engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("velocity field evaluated at t = 0")]
    Singularity,

    #[error("all mixture posterior weights underflowed")]
    DegeneratePosterior,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input (files, configs, arguments) rather
    /// than by the numerical run itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::ShapeMismatch { .. }
                | Error::NotFound(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
