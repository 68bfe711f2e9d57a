use thiserror::Error;

/// Failures surfaced by detection and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a finiteness or length precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A statistic is undefined on a segment, e.g. a sum of squares vanished.
    #[error("degenerate segment [{start}, {end}): {reason}")]
    DegenerateSegment {
        start: usize,
        end: usize,
        reason: String,
    },

    /// Inconsistent or unsupported configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The Beta mass of the selection set underflowed to zero.
    #[error("numerical underflow: {0}")]
    Underflow(String),

    /// Every Monte Carlo sample fell outside the selection set, so the
    /// conditioned density has no mass to normalize.
    #[error("conditioned density has zero mass: no sample landed in the selection set")]
    EmptySelection,
}

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
