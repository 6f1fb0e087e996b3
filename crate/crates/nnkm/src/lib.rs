//! File formats, synthetic data, benchmarks and the command line around `nnk-core`.

pub mod bench;
pub mod cli;
pub mod dataio;
mod error;
pub mod format;

pub use error::{DataError, Result};
