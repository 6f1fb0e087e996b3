//! Kernel dictionary learning with non-negative, adaptively sparse codes.
//!
//! A dictionary is a set of atoms living in the reproducing-kernel Hilbert
//! space of a kernel, each atom a linear combination `ΦA` of mapped training
//! samples. Samples are coded by selecting the most similar atoms and solving
//! a small non-negative quadratic program on them, so every code describes a
//! point through a handful of non-redundant neighbours. Alternating that
//! coding step with a least-squares dictionary update gives NNK-Means; with a
//! sparsity of one it is exactly (kernel) k-means.
//!
//! The crate is `no_std` + `alloc`. The `std` feature adds wall-clock timing
//! to fit reports and `parallel` spreads per-sample work over rayon.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]
// `!(x > y)` is deliberate where NaN must take the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod classifier;
pub mod coder;
pub mod dictionary;
mod error;
pub mod kernel;
pub mod linalg;
pub mod oracle;
mod par;
pub mod trainer;

pub use classifier::{accuracy, classify, fit_per_class, ClassifierModel, Classification};
pub use coder::{
    code_batch, code_one, nnls_on_support, reconstruction_error, select_candidates,
    CodingConfig, SparseCode,
};
pub use dictionary::{Dictionary, DictionaryMeta};
pub use error::{Error, Result};
pub use kernel::{cross_similarity, gram, kernel_eval, FeatureMatrix, GramView, KernelSpec};
pub use linalg::Mat;
pub use trainer::{
    dictionary_update, export_atoms, fit, fit_with_observer, handle_dead_atoms, init_dictionary,
    objective, DeadAtomPolicy, FitConfig, FitReport,
};
