use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{similarities_to, KernelSpec};
use crate::linalg::{dot, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DictionaryMeta {
    /// Sparsity budget used while fitting.
    pub sparsity: usize,
    pub iterations_run: usize,
    pub seed: u64,
}

/// Atoms `ΦA` stored as coefficients over a set of support samples.
///
/// The atom Gram matrix `AᵀKA` is computed once on construction and reused
/// by every coding call.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    support: Mat,
    coefficients: Mat,
    kernel: KernelSpec,
    meta: DictionaryMeta,
    atom_gram: Mat,
}

impl Dictionary {
    /// `support` is `d×P`, `coefficients` is `P×M`.
    pub fn new(support: Mat, coefficients: Mat, kernel: KernelSpec, meta: DictionaryMeta) -> Result<Self> {
        kernel.validate()?;
        if coefficients.rows() != support.cols() {
            return Err(Error::DimensionMismatch { expected: support.cols(), got: coefficients.rows() });
        }
        if coefficients.cols() == 0 {
            return Err(Error::EmptyDictionary);
        }
        if !support.as_slice().iter().chain(coefficients.as_slice()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        for p in 0..support.cols() {
            kernel.check_vector(support.col(p))?;
        }
        let atom_gram = atom_gram(&support, &coefficients, &kernel);
        Ok(Dictionary { support, coefficients, kernel, meta, atom_gram })
    }

    /// Internal constructor for a Gram already known to the trainer.
    pub(crate) fn from_parts(
        support: Mat,
        coefficients: Mat,
        kernel: KernelSpec,
        meta: DictionaryMeta,
        atom_gram: Mat,
    ) -> Self {
        Dictionary { support, coefficients, kernel, meta, atom_gram }
    }

    pub fn support(&self) -> &Mat {
        &self.support
    }

    pub fn coefficients(&self) -> &Mat {
        &self.coefficients
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn meta(&self) -> &DictionaryMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.support.rows()
    }

    pub fn atom_count(&self) -> usize {
        self.coefficients.cols()
    }

    pub fn support_len(&self) -> usize {
        self.support.cols()
    }

    /// `AᵀKA`: inner products between atoms in the RKHS.
    pub fn atom_gram(&self) -> &Mat {
        &self.atom_gram
    }

    /// κ(q, q) and the atom similarities `Aᵀ k_q`.
    pub fn query_similarities(&self, query: &[f64]) -> Result<(f64, Vec<f64>)> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: query.len() });
        }
        self.kernel.check_vector(query)?;
        let kq = similarities_to(query, &self.support, &self.kernel);
        Ok((self.kernel.self_similarity(query), self.coefficients.tr_mul_vec(&kq)))
    }
}

pub(crate) fn atom_gram(support: &Mat, coefficients: &Mat, kernel: &KernelSpec) -> Mat {
    let p = support.cols();
    let m = coefficients.cols();
    // K·A one support row at a time, then Aᵀ(KA).
    let mut ka = Mat::zeros(p, m);
    let mut row = alloc::vec![0.0; p];
    for i in 0..p {
        for (j, r) in row.iter_mut().enumerate() {
            *r = kernel.eval_unchecked(support.col(i), support.col(j));
        }
        for a in 0..m {
            ka[(i, a)] = dot(&row, coefficients.col(a));
        }
    }
    let mut g = coefficients.transpose().matmul(&ka);
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(g: &mut Mat) {
    for i in 0..g.rows() {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}
