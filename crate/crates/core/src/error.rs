use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Certification failures are never errors: they are carried as report
/// entries. These variants cover malformed input and contract breaches.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("invalid event: atom index {index} out of range for {atoms} atoms")]
    InvalidEvent { index: usize, atoms: usize },

    #[error("invalid event: duplicate atom index {0}")]
    DuplicateAtom(usize),

    #[error("not a partition: {0}")]
    Partition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point is not a member of the fibre set (atoms {atoms:?})")]
    Membership { atoms: Vec<usize> },

    #[error("self-map violation: image leaves the fibre set at atom {atom}")]
    SelfMap { atom: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid gauge: {0}")]
    InvalidGauge(String),

    #[error("invalid gauge sequence: {0}")]
    InvalidSequence(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
