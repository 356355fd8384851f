use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid target: {0}")]
    Target(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} exceeds the supported cap of {cap}")]
    Capacity {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("zero total weight in expectation")]
    ZeroWeight,

    #[error("non-finite value at configuration {index}")]
    NonFinite { index: usize },

    #[error("zero overlap, gradient undefined")]
    ZeroOverlap,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("degenerate SR system")]
    DegenerateSystem,

    #[error("free learner failed")]
    FreeLearnerFailed,

    #[error("only {survived} of {requested} trials survived; at least 2 are required")]
    TooFewTrials { survived: usize, requested: usize },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
