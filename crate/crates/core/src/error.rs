use std::io;

use crate::point::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "quadrature of the cumulative jump rate did not converge on [0, {t}] (estimate {estimate})"
    )]
    Quadrature { t: f64, estimate: f64 },

    #[error("root search failed: {0}")]
    Bracket(String),

    #[error("{}no grid point in mode {mode}", step.map(|k| format!("step {k}: ")).unwrap_or_default())]
    MissingMode { step: Option<usize>, mode: Mode },

    #[error("step {step}, mode {mode}: need {needed} samples to initialise the grid, only {available} available")]
    InsufficientSamples {
        step: usize,
        mode: Mode,
        needed: usize,
        available: usize,
    },

    #[error("horizon {n}: N*m = {nm} does not exceed K = {k}; increase N")]
    HorizonTooShort { n: usize, nm: f64, k: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    #[error("grid file: {0}")]
    GridFormat(String),

    #[error("grid file was trained for model `{found}`, expected `{expected}`")]
    ModelMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }
}
