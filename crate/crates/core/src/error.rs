use thiserror::Error;

/// Errors produced by the analysis engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("far-field violation: distance {distance} is below the minimum {minimum}")]
    FarField { distance: f64, minimum: f64 },

    #[error("barraging set is empty")]
    EmptyBarragingSet,

    #[error("relay count {requested} exceeds the configured maximum {max}")]
    TooManyRelays { requested: usize, max: usize },

    #[error("interference schedule is malformed: {0}")]
    MalformedSchedule(String),

    #[error("transient block (I - Q) is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
