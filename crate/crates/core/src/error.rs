use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cosine kernel is undefined for a zero vector")]
    ZeroVector,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("non-finite value in input")]
    NonFinite,

    #[error(
        "gram matrix for {n} samples exceeds the cache cap of {cap}; use the on-the-fly view instead"
    )]
    GramTooLarge { n: usize, cap: usize },

    #[error("dictionary has no atoms")]
    EmptyDictionary,

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("active-set solver hit the iteration limit ({iterations})")]
    NnlsMaxIter { iterations: usize, best: Vec<f64> },

    #[error("matrix is numerically singular")]
    Singular,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{atoms} atoms requested but only {samples} samples available")]
    TooFewSamples { atoms: usize, samples: usize },

    #[error("class {class} has {count} samples, fewer than the {atoms} atoms requested")]
    ClassTooSmall { class: u32, count: usize, atoms: usize },

    #[error("labels are required")]
    MissingLabels,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("oracle budget exceeded: {size} > {max}")]
    BudgetExceeded { size: usize, max: usize },

    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error("iteration {iteration}: {source}")]
    Iteration { iteration: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample { index, source: Box::new(self) }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration { iteration, source: Box::new(self) }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
