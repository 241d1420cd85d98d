use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator produced a non-finite value.
    #[error("numerical instability in {stage} stage at step {step}")]
    NumericalInstability { stage: String, step: usize },

    /// A solver failure inside one transverse ring; its velocity classes share
    /// one field and fail together.
    #[error("ring {ring} ({n_classes} velocity classes): {source}")]
    Realization {
        ring: usize,
        n_classes: usize,
        #[source]
        source: Box<Error>,
    },

    /// Signal counts below the noise estimate, usually a miscalibrated window.
    #[error("negative signal: {signal} counts below noise estimate {noise}")]
    NegativeSignal { signal: u64, noise: u64 },

    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
