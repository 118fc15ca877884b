//! Crate-wide error type.
//!
//! Each subsystem has its own error enum; [`Error`] wraps them so callers
//! (notably the CLI) can render a uniform `<module>: <message>` line.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal: {0}")]
    Signal(#[from] crate::signal::SignalError),
    #[error("tensorgrad: {0}")]
    Grad(#[from] crate::tensorgrad::GradError),
    #[error("metrics: {0}")]
    Metrics(#[from] crate::metrics::MetricError),
    #[error("asr: {0}")]
    Asr(#[from] crate::asr::AsrError),
    #[error("attack: {0}")]
    Attack(#[from] crate::attack::AttackError),
    #[error("enhance: {0}")]
    Enhance(#[from] crate::enhance::EnhanceError),
    #[error("harness: {0}")]
    Harness(#[from] crate::harness::HarnessError),
}

impl Error {
    /// The subsystem that produced the error, for `error: <module>: <message>` lines.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Signal(_) => "signal",
            Error::Grad(_) => "tensorgrad",
            Error::Metrics(_) => "metrics",
            Error::Asr(_) => "asr",
            Error::Attack(_) => "attack",
            Error::Enhance(_) => "enhance",
            Error::Harness(_) => "harness",
        }
    }
}
