use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("adiabatic approximation invalid: mod_rate {mod_rate} Hz exceeds deviation/100 = {limit} Hz")]
    AdiabaticInvalid { mod_rate: f64, limit: f64 },

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("insufficient frequency span: {0}")]
    InsufficientSpan(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("wrong lineshape variant: expected {expected}")]
    WrongVariant { expected: &'static str },

    #[error("stream mismatch: {0}")]
    StreamMismatch(String),

    #[error("channel {channel} is not strictly increasing at index {index}")]
    Unsorted { channel: char, index: usize },

    #[error("histogram spec mismatch")]
    SpecMismatch,

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("too few segments: need at least {needed}, have {have}")]
    TooFewSegments { needed: usize, have: usize },

    #[error("ambiguous spectrum: {0}")]
    Ambiguous(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("rank-deficient Jacobian: parameter(s) {0} not identifiable")]
    RankDeficient(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::AdiabaticInvalid { .. }
                | Error::Config(_)
                | Error::WrongVariant { .. }
                | Error::SpecMismatch
                | Error::Format(_)
                | Error::Unsorted { .. }
                | Error::StreamMismatch(_)
                | Error::InsufficientSpan(_)
                | Error::TooFewSegments { .. }
        )
    }

    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::RankDeficient(_))
    }
}
