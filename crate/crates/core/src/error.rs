use thiserror::Error;

use crate::barrier::BarrierCurve;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Backward integration ran past the horizon without terminating. Carries
    /// the partial curve for diagnosis.
    #[error("barrier integration exceeded the horizon of {horizon} days")]
    HorizonExceeded { horizon: f64, partial: Box<BarrierCurve> },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}
