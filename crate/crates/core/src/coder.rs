//! Non-negative kernel (NNK) sparse coding against a fixed dictionary.
//!
//! A query is coded in three steps: rank atoms by their RKHS inner product
//! with the query and keep the top `k`, solve the non-negative quadratic
//! `min θᵀKθ − 2kᵀθ, θ ≥ 0` on those candidates, and drop vanishing weights.
//! Atoms that add no direction the others lack get zero weight, so the final
//! support size adapts to where the query sits among the atoms.

use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::linalg::{with_jitter, Cholesky, Mat};
use crate::par::map_indexed;

/// One column of the code matrix `W`: positive weights on strictly increasing atom indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    entries: Vec<(usize, f64)>,
    query_self_similarity: f64,
}

impl SparseCode {
    /// Validates ordering and positivity.
    pub fn new(entries: Vec<(usize, f64)>, query_self_similarity: f64) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig("code indices must be strictly increasing".into()));
        }
        if entries.iter().any(|&(_, w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("code weights must be positive and finite".into()));
        }
        Ok(SparseCode { entries, query_self_similarity })
    }

    pub fn empty(query_self_similarity: f64) -> Self {
        SparseCode { entries: Vec::new(), query_self_similarity }
    }

    pub(crate) fn unit(atom: usize, query_self_similarity: f64) -> Self {
        SparseCode { entries: vec![(atom, 1.0)], query_self_similarity }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn query_self_similarity(&self) -> f64 {
        self.query_self_similarity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn weight(&self, atom: usize) -> f64 {
        self.entries
            .binary_search_by_key(&atom, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    /// `‖φ_q − ΦAθ‖²` given the atom similarities and atom Gram.
    pub(crate) fn error_against(&self, sims: &[f64], atom_gram: &Mat) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for &(a, wa) in &self.entries {
            lin += wa * sims[a];
            for &(b, wb) in &self.entries {
                quad += wa * wb * atom_gram[(a, b)];
            }
        }
        (self.query_self_similarity - 2.0 * lin + quad).max(0.0)
    }
}

/// How a query picks its atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodingRule {
    /// Top-`k` candidates by similarity, then the non-negative solve.
    Nnk,
    /// The single atom nearest in RKHS distance with unit weight: the
    /// k-means assignment.
    NearestAtom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodingConfig {
    pub sparsity_k: usize,
    /// Weights at or below this fraction of the largest weight are dropped.
    pub prune_rel_tol: f64,
    pub nnls_max_iter: usize,
    /// Candidate pool larger than `k`; the solve is then repeated on the
    /// `k` heaviest survivors. `None` means the pool is exactly `k`.
    pub candidate_pool: Option<usize>,
    pub rule: CodingRule,
    pub parallel: bool,
}

impl CodingConfig {
    /// NNK coding for `k ≥ 2`; `k = 1` selects the k-means assignment rule.
    pub fn new(sparsity_k: usize) -> Self {
        CodingConfig {
            sparsity_k,
            prune_rel_tol: 1e-10,
            nnls_max_iter: 1000,
            candidate_pool: None,
            rule: if sparsity_k == 1 { CodingRule::NearestAtom } else { CodingRule::Nnk },
            parallel: false,
        }
    }

    pub fn with_rule(mut self, rule: CodingRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity_k == 0 {
            return Err(Error::InvalidConfig("sparsity_k must be at least 1".into()));
        }
        if !(self.prune_rel_tol > 0.0 && self.prune_rel_tol < 1.0) {
            return Err(Error::InvalidConfig("prune_rel_tol must lie in (0, 1)".into()));
        }
        if self.nnls_max_iter == 0 {
            return Err(Error::InvalidConfig("nnls_max_iter must be at least 1".into()));
        }
        if matches!(self.candidate_pool, Some(p) if p < self.sparsity_k) {
            return Err(Error::InvalidConfig("candidate_pool must be at least sparsity_k".into()));
        }
        Ok(())
    }
}

impl Default for CodingConfig {
    fn default() -> Self {
        CodingConfig::new(5)
    }
}

/// Indices of the `min(k, M)` largest similarities, ascending; ties go to the lower index.
pub fn select_candidates(query_sims: &[f64], k: usize) -> Result<Vec<usize>> {
    if query_sims.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let k = k.min(query_sims.len());
    let mut order: Vec<usize> = (0..query_sims.len()).collect();
    let by_sim = |a: &usize, b: &usize| {
        query_sims[*b].total_cmp(&query_sims[*a]).then(a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k, by_sim);
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(order)
}

/// Minimizes `θᵀKθ − 2kᵀθ` over `θ ≥ 0` with a Lawson–Hanson active-set loop.
///
/// On return every positive entry satisfies `|(Kθ − k)ⱼ| ≤ 1e-8·max(1, ‖k‖∞)`
/// and every zero entry `(Kθ − k)ⱼ ≥ −1e-8·max(1, ‖k‖∞)`.
pub fn nnls_on_support(kss: &Mat, ks: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let n = ks.len();
    if kss.rows() != n || kss.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: kss.rows() });
    }
    if !kss.is_symmetric(1e-10) {
        return Err(Error::NotSymmetric);
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = ks.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let add_tol = 0.5e-8 * scale;

    let mut theta = vec![0.0; n];
    let mut passive = vec![false; n];

    // Warm start from the clipped unconstrained solution when the full system
    // is comfortably nonsingular; otherwise start empty so that linearly
    // dependent candidates are never brought in together.
    if let Some(ch) = Cholesky::factor(kss, 1e-10) {
        for (j, z) in ch.solve(ks).into_iter().enumerate() {
            if z > 0.0 {
                theta[j] = z;
                passive[j] = true;
            }
        }
    }

    let mut iterations = 0usize;
    let mut rejected = vec![false; n];
    loop {
        // Make θ the solution on the passive set, backing off along the
        // segment whenever the unconstrained step leaves the feasible region.
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                theta.iter_mut().for_each(|t| *t = 0.0);
                break;
            }
            let z = solve_sub(kss, ks, &idx)?;
            if z.iter().all(|&v| v > 0.0) {
                theta.iter_mut().for_each(|t| *t = 0.0);
                for (&j, &v) in idx.iter().zip(&z) {
                    theta[j] = v;
                }
                break;
            }
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NnlsMaxIter { iterations: max_iter, best: theta });
            }
            let mut alpha = f64::INFINITY;
            let mut leaving = idx[0];
            for (&j, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    let a = theta[j] / (theta[j] - v);
                    if a < alpha {
                        alpha = a;
                        leaving = j;
                    }
                }
            }
            for (&j, &v) in idx.iter().zip(&z) {
                theta[j] += alpha * (v - theta[j]);
            }
            // α is attained at `leaving`; anything else driven to round-off leaves too.
            theta[leaving] = 0.0;
            passive[leaving] = false;
            for &j in &idx {
                if theta[j] <= 1e-15 * scale {
                    theta[j] = 0.0;
                    passive[j] = false;
                }
            }
        }

        let grad = kss.mul_vec(&theta);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if passive[j] || rejected[j] {
                continue;
            }
            let w = ks[j] - grad[j];
            if w > add_tol && best.is_none_or(|(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        let Some((j, _)) = best else {
            return Ok(theta);
        };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NnlsMaxIter { iterations: max_iter, best: theta });
        }
        // A freshly added index must come out positive; round-off can say
        // otherwise for a nearly dependent column, which then stays out.
        let mut idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        idx.push(j);
        idx.sort_unstable();
        let z = solve_sub(kss, ks, &idx)?;
        let zj = z[idx.binary_search(&j).unwrap()];
        if zj <= 0.0 {
            rejected[j] = true;
            continue;
        }
        passive[j] = true;
        rejected.iter_mut().for_each(|r| *r = false);
    }
}

fn solve_sub(kss: &Mat, ks: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    let sub = kss.select(idx);
    let rhs: Vec<f64> = idx.iter().map(|&j| ks[j]).collect();
    if let Some(ch) = Cholesky::factor(&sub, 1e-14) {
        return Ok(ch.solve(&rhs));
    }
    let jitter = 1e-10 * sub.trace() / idx.len() as f64;
    match Cholesky::factor(&with_jitter(&sub, jitter), 0.0) {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => Err(Error::Singular),
    }
}

/// Codes one query from its self-similarity, atom similarities and the atom Gram.
pub fn code_from_similarities(
    self_similarity: f64,
    sims: &[f64],
    atom_gram: &Mat,
    config: &CodingConfig,
) -> Result<SparseCode> {
    let m = sims.len();
    if m == 0 {
        return Err(Error::EmptyDictionary);
    }
    if atom_gram.rows() != m || atom_gram.cols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: atom_gram.rows() });
    }
    match config.rule {
        CodingRule::NearestAtom => {
            // ‖φ_q − aₘ‖² = κ(q,q) − 2sₘ + ‖aₘ‖²; lowest index wins ties.
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for a in 0..m {
                let d = self_similarity - 2.0 * sims[a] + atom_gram[(a, a)];
                if d < best_d {
                    best_d = d;
                    best = a;
                }
            }
            Ok(SparseCode::unit(best, self_similarity))
        }
        CodingRule::Nnk => {
            if sims.iter().all(|&s| s == 0.0) {
                return Ok(SparseCode::empty(self_similarity));
            }
            let k = config.sparsity_k.min(m);
            let pool = config.candidate_pool.unwrap_or(k).max(k).min(m);
            let mut support = select_candidates(sims, pool)?;
            let mut theta = solve_on(&support, sims, atom_gram, config.nnls_max_iter)?;
            if pool > k && theta.iter().filter(|&&t| t > 0.0).count() > k {
                let mut order: Vec<usize> = (0..support.len()).collect();
                order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
                let mut keep: Vec<usize> = order[..k].iter().map(|&i| support[i]).collect();
                keep.sort_unstable();
                theta = solve_on(&keep, sims, atom_gram, config.nnls_max_iter)?;
                support = keep;
            }
            Ok(pruned(support, theta, self_similarity, config))
        }
    }
}

/// Non-negative solve restricted to a given support (ascending atom indices).
pub fn code_on_support(
    self_similarity: f64,
    sims: &[f64],
    atom_gram: &Mat,
    support: &[usize],
    config: &CodingConfig,
) -> Result<SparseCode> {
    let theta = solve_on(support, sims, atom_gram, config.nnls_max_iter)?;
    Ok(pruned(support.to_vec(), theta, self_similarity, config))
}

fn pruned(support: Vec<usize>, theta: Vec<f64>, self_similarity: f64, config: &CodingConfig) -> SparseCode {
    let max_w = theta.iter().cloned().fold(0.0, f64::max);
    let floor = config.prune_rel_tol * max_w;
    let entries = support
        .into_iter()
        .zip(theta)
        .filter(|&(_, w)| w > floor && w > 0.0)
        .collect();
    SparseCode { entries, query_self_similarity: self_similarity }
}

fn solve_on(support: &[usize], sims: &[f64], atom_gram: &Mat, max_iter: usize) -> Result<Vec<f64>> {
    let kss = atom_gram.select(support);
    let ks: Vec<f64> = support.iter().map(|&j| sims[j]).collect();
    nnls_on_support(&kss, &ks, max_iter)
}

pub fn code_one(query: &[f64], dict: &Dictionary, config: &CodingConfig) -> Result<SparseCode> {
    config.validate()?;
    let (kqq, sims) = dict.query_similarities(query)?;
    code_from_similarities(kqq, &sims, dict.atom_gram(), config)
}

/// Codes every column; failures carry their sample index and do not stop the rest.
pub fn code_batch(queries: &FeatureMatrix, dict: &Dictionary, config: &CodingConfig) -> Vec<Result<SparseCode>> {
    if let Err(e) = config.validate() {
        return (0..queries.len()).map(|i| Err(e.clone().at_sample(i))).collect();
    }
    map_indexed(queries.len(), config.parallel, |i| {
        code_one(queries.sample(i), dict, config).map_err(|e| e.at_sample(i))
    })
}

/// `‖φ_q − ΦA_Sθ‖² = κ(q,q) − 2θᵀk_S + θᵀK_SSθ`, clamped at zero.
pub fn reconstruction_error(code: &SparseCode, query_sims: &[f64], dict: &Dictionary) -> Result<f64> {
    let m = dict.atom_count();
    if query_sims.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: query_sims.len() });
    }
    if let Some(&(a, _)) = code.entries.last() {
        if a >= m {
            return Err(Error::DimensionMismatch { expected: m, got: a + 1 });
        }
    }
    Ok(code.error_against(query_sims, dict.atom_gram()))
}
