use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A position or delay falls outside the modelled link.
    #[error("{what} = {value} outside valid range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// An argument violates a domain precondition (negative power, p >= 1, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// Every gate fired; only a lower bound on the power is available.
    #[error("detector saturated: {detections} detections in {gates} gates")]
    Saturated { detections: u64, gates: u64 },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("campaign error: {0}")]
    Campaign(String),

    #[error("stitch error: {0}")]
    Stitch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        what,
        reason: reason.into(),
    }
}
