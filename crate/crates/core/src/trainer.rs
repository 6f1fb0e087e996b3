//! The NNK-Means alternation.
//!
//! Each iteration codes every training sample against the current atoms,
//! repairs atoms no sample uses, and solves `A = Wᵀ(WWᵀ)⁻¹`, the least-squares
//! dictionary for the fixed codes. Atoms stay combinations of training
//! samples throughout. With `sparsity_k = 1` the codes are hard nearest-atom
//! assignments with unit weight, `WWᵀ` is the diagonal of cluster sizes and
//! the update is the k-means centroid mean.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coder::{code_from_similarities, code_on_support, CodingConfig, CodingRule, SparseCode};
use crate::dictionary::{symmetrize, Dictionary, DictionaryMeta};
use crate::error::{Error, Result};
use crate::kernel::{FeatureMatrix, GramView, KernelSpec, DEFAULT_GRAM_CAP};
use crate::linalg::{dot, with_jitter, Cholesky, Mat};
use crate::par::map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeadAtomPolicy {
    /// Move the atom onto the worst-reconstructed sample.
    #[default]
    ReseedWorst,
    /// Remove the atom, shrinking `M`.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    /// `M` distinct samples drawn uniformly without replacement.
    #[default]
    Uniform,
    /// D² seeding with RKHS distances.
    KMeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub atoms_m: usize,
    pub sparsity_k: usize,
    pub max_iters: usize,
    pub rel_obj_tol: f64,
    pub seed: u64,
    pub dead_atom_policy: DeadAtomPolicy,
    pub init: InitMethod,
    pub candidate_pool: Option<usize>,
    /// Samples above this count are coded from Gram rows computed on demand.
    pub gram_cap: usize,
    /// During training, also re-solve each sample on its previous support and
    /// keep whichever code reconstructs better, so the coding step can never
    /// raise the objective. Has no effect on the nearest-atom rule.
    pub monotone_coding: bool,
    pub parallel: bool,
}

impl FitConfig {
    pub fn new(atoms_m: usize, sparsity_k: usize) -> Self {
        FitConfig {
            atoms_m,
            sparsity_k,
            max_iters: 10,
            rel_obj_tol: 1e-6,
            seed: 0,
            dead_atom_policy: DeadAtomPolicy::ReseedWorst,
            init: InitMethod::Uniform,
            candidate_pool: None,
            gram_cap: DEFAULT_GRAM_CAP,
            monotone_coding: true,
            parallel: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn coding(&self) -> CodingConfig {
        let mut c = CodingConfig::new(self.sparsity_k).with_parallel(self.parallel);
        c.candidate_pool = self.candidate_pool;
        c
    }

    pub fn validate(&self, samples: usize) -> Result<()> {
        if self.atoms_m == 0 {
            return Err(Error::InvalidConfig("atoms_m must be at least 1".into()));
        }
        if self.atoms_m > samples {
            return Err(Error::TooFewSamples { atoms: self.atoms_m, samples });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.rel_obj_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_obj_tol must be positive".into()));
        }
        self.coding().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ObjectiveConverged,
    CodesStable,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    /// `‖Φ − ΦAW‖²_F` after each dictionary update.
    pub objective_per_iter: Vec<f64>,
    /// `(iteration, atom)`, iterations counted from 1.
    pub dead_atom_events: Vec<(usize, usize)>,
    pub coding_seconds: Vec<f64>,
    pub update_seconds: Vec<f64>,
    pub converged: bool,
    pub stop_reason: Option<StopReason>,
}

impl FitReport {
    pub fn iterations(&self) -> usize {
        self.objective_per_iter.len()
    }

    pub fn had_dead_atoms(&self, iteration: usize) -> bool {
        self.dead_atom_events.iter().any(|&(it, _)| it == iteration)
    }

    /// Largest increase between consecutive iterations that saw no dead-atom
    /// event, relative to `max(1, previous)`. Non-positive means monotone.
    pub fn worst_monotonicity_violation(&self) -> f64 {
        let obj = &self.objective_per_iter;
        (1..obj.len())
            .filter(|&t| !self.had_dead_atoms(t + 1))
            .map(|t| (obj[t] - obj[t - 1]) / obj[t - 1].max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// What an observer sees after each iteration.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub objective: f64,
    pub dead_atoms: usize,
    pub codes: &'a [SparseCode],
    /// `N×M` coefficients over the full training set.
    pub coefficients: &'a Mat,
}

pub trait FitObserver {
    fn on_iteration(&mut self, state: &IterationState<'_>);
}

impl<F: FnMut(&IterationState<'_>)> FitObserver for F {
    fn on_iteration(&mut self, state: &IterationState<'_>) {
        self(state)
    }
}

struct NoObserver;

impl FitObserver for NoObserver {
    fn on_iteration(&mut self, _: &IterationState<'_>) {}
}

/// `m` distinct indices in `0..n`, uniformly at random.
pub fn sample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, n, m).into_vec()
}

fn init_indices(gram: &GramView<'_>, config: &FitConfig) -> Vec<usize> {
    let n = gram.len();
    match config.init {
        InitMethod::Uniform => sample_indices(n, config.atoms_m, config.seed),
        InitMethod::KMeansPlusPlus => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut chosen = vec![rng.random_range(0..n)];
            let mut d2: Vec<f64> = (0..n).map(|_| f64::INFINITY).collect();
            while chosen.len() < config.atoms_m {
                let c = *chosen.last().unwrap();
                let kc = gram.diag(c);
                let row = gram.row(c);
                for i in 0..n {
                    let d = (gram.diag(i) + kc - 2.0 * row[i]).max(0.0);
                    d2[i] = d2[i].min(d);
                }
                for &c in &chosen {
                    d2[c] = 0.0;
                }
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = n - 1;
                    for (i, &d) in d2.iter().enumerate() {
                        if d > 0.0 && r < d {
                            pick = i;
                            break;
                        }
                        r -= d;
                    }
                    if d2[pick] == 0.0 {
                        (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick)
                    } else {
                        pick
                    }
                } else {
                    // all remaining samples coincide with chosen ones
                    (0..n).find(|i| !chosen.contains(i)).unwrap()
                };
                chosen.push(next);
            }
            chosen
        }
    }
}

fn basis_coefficients(n: usize, idx: &[usize]) -> Mat {
    let mut a = Mat::zeros(n, idx.len());
    for (m, &i) in idx.iter().enumerate() {
        a[(i, m)] = 1.0;
    }
    a
}

/// Initial dictionary over the full training set: atom `m` is `φ` of one sampled training point.
pub fn init_dictionary(data: &FeatureMatrix, kernel: &KernelSpec, config: &FitConfig) -> Result<Dictionary> {
    config.validate(data.len())?;
    let gram = GramView::on_the_fly(data, *kernel)?;
    let idx = init_indices(&gram, config);
    let atom_gram = Mat::from_fn(idx.len(), idx.len(), |a, b| gram.get(idx[a], idx[b]));
    Ok(Dictionary::from_parts(
        data.matrix().clone(),
        basis_coefficients(data.len(), &idx),
        *kernel,
        DictionaryMeta { sparsity: config.sparsity_k, iterations_run: 0, seed: config.seed },
        atom_gram,
    ))
}

/// `A = Wᵀ(WWᵀ)⁻¹` for codes over `atoms` atoms; returns the `N×M` coefficients.
pub fn dictionary_update(codes: &[SparseCode], atoms: usize) -> Result<Mat> {
    let mut g = Mat::zeros(atoms, atoms);
    for code in codes {
        for &(a, wa) in code.entries() {
            if a >= atoms {
                return Err(Error::DimensionMismatch { expected: atoms, got: a + 1 });
            }
            for &(b, wb) in code.entries() {
                g[(a, b)] += wa * wb;
            }
        }
    }
    let g_inv = invert_code_gram(&g)?;
    let mut out = Mat::zeros(codes.len(), atoms);
    for (i, code) in codes.iter().enumerate() {
        for &(m, w) in code.entries() {
            for n in 0..atoms {
                out[(i, n)] += w * g_inv[(m, n)];
            }
        }
    }
    Ok(out)
}

fn invert_code_gram(g: &Mat) -> Result<Mat> {
    let m = g.rows();
    let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || g[(i, j)] == 0.0));
    if diagonal {
        // hard assignments: Σ⁻¹ exactly
        let mut inv = Mat::zeros(m, m);
        for i in 0..m {
            if !(g[(i, i)] > 0.0) {
                return Err(Error::Singular);
            }
            inv[(i, i)] = 1.0 / g[(i, i)];
        }
        return Ok(inv);
    }
    if let Some(ch) = Cholesky::factor(g, 1e-12) {
        return Ok(ch.inverse());
    }
    let jitter = 1e-8 * g.trace() / m as f64;
    Cholesky::factor(&with_jitter(g, jitter), 0.0).map(|c| c.inverse()).ok_or(Error::Singular)
}

/// Result of repairing unused atoms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeadAtoms {
    /// Atom indices (pre-repair numbering) found unused.
    pub dead: Vec<usize>,
    /// `(atom, sample)` for every reseed performed.
    pub reseeded: Vec<(usize, usize)>,
    /// Atom count after repair.
    pub atoms: usize,
}

/// Makes every atom used by at least one code.
///
/// `ReseedWorst` recodes the sample with the largest `errors` entry onto the
/// dead atom alone with weight 1 (lowest index on ties, each sample taken at
/// most once); atoms emptied by that move are repaired the same way. `Drop`
/// deletes dead atoms and renumbers the rest.
pub fn handle_dead_atoms(
    codes: &mut [SparseCode],
    errors: &[f64],
    atoms: usize,
    policy: DeadAtomPolicy,
) -> Result<DeadAtoms> {
    let mut usage = vec![0usize; atoms];
    for code in codes.iter() {
        for a in code.indices() {
            usage[a] += 1;
        }
    }
    let mut out = DeadAtoms { atoms, ..Default::default() };
    match policy {
        DeadAtomPolicy::ReseedWorst => {
            let mut taken = vec![false; codes.len()];
            loop {
                let dead: Vec<usize> = (0..atoms).filter(|&m| usage[m] == 0).collect();
                if dead.is_empty() {
                    break;
                }
                for m in dead {
                    let mut pick: Option<usize> = None;
                    for i in 0..codes.len() {
                        if !taken[i] && pick.is_none_or(|p| errors[i] > errors[p]) {
                            pick = Some(i);
                        }
                    }
                    let Some(i) = pick else {
                        return Err(Error::TooFewSamples { atoms, samples: codes.len() });
                    };
                    taken[i] = true;
                    for a in codes[i].indices() {
                        usage[a] -= 1;
                    }
                    codes[i] = SparseCode::unit(m, codes[i].query_self_similarity());
                    usage[m] += 1;
                    out.dead.push(m);
                    out.reseeded.push((m, i));
                }
            }
        }
        DeadAtomPolicy::Drop => {
            let mut remap = vec![usize::MAX; atoms];
            let mut next = 0;
            for m in 0..atoms {
                if usage[m] == 0 {
                    out.dead.push(m);
                } else {
                    remap[m] = next;
                    next += 1;
                }
            }
            if next == 0 {
                return Err(Error::EmptyDictionary);
            }
            if !out.dead.is_empty() {
                for code in codes.iter_mut() {
                    let entries = code.entries().iter().map(|&(a, w)| (remap[a], w)).collect();
                    *code = SparseCode::new(entries, code.query_self_similarity())?;
                }
            }
            out.atoms = next;
        }
    }
    Ok(out)
}

/// Atom similarities `(KA)ᵀ` (one column per sample) and the atom Gram `AᵀKA`.
fn atom_similarities(gram: &GramView<'_>, coeffs: &Mat, parallel: bool) -> (Mat, Mat) {
    let n = coeffs.rows();
    let m = coeffs.cols();
    let nz: Vec<usize> = (0..n).filter(|&p| (0..m).any(|a| coeffs[(p, a)] != 0.0)).collect();
    let dense = nz.len() == n;
    let packed: Vec<Vec<f64>> = if dense {
        Vec::new()
    } else {
        (0..m).map(|a| nz.iter().map(|&p| coeffs[(p, a)]).collect()).collect()
    };
    let cols = map_indexed(n, parallel, |i| {
        let row = gram.row(i);
        if dense {
            (0..m).map(|a| dot(&row, coeffs.col(a))).collect::<Vec<f64>>()
        } else {
            let g: Vec<f64> = nz.iter().map(|&p| row[p]).collect();
            packed.iter().map(|c| dot(&g, c)).collect()
        }
    });
    let mut sims = Mat::zeros(m, n);
    for (i, c) in cols.into_iter().enumerate() {
        sims.col_mut(i).copy_from_slice(&c);
    }
    let mut ag = Mat::zeros(m, m);
    for &p in &nz {
        let s = sims.col(p);
        for a in 0..m {
            let c = coeffs[(p, a)];
            if c == 0.0 {
                continue;
            }
            for b in 0..m {
                ag[(a, b)] += c * s[b];
            }
        }
    }
    symmetrize(&mut ag);
    (sims, ag)
}

/// `tr(K) − 2·tr(KAW) + tr(WᵀAᵀKAW)`, clamped at zero. `coeffs` is `N×M`.
pub fn objective(gram: &GramView<'_>, coeffs: &Mat, codes: &[SparseCode]) -> Result<f64> {
    let n = gram.len();
    if coeffs.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: coeffs.rows() });
    }
    if codes.len() != n {
        return Err(Error::LengthMismatch(codes.len(), n));
    }
    let m = coeffs.cols();
    if codes.iter().flat_map(|c| c.indices()).any(|a| a >= m) {
        return Err(Error::DimensionMismatch { expected: m, got: m + 1 });
    }
    // KA, row by row
    let mut ka = Mat::zeros(n, m);
    for i in 0..n {
        let row = gram.row(i);
        for a in 0..m {
            ka[(i, a)] = dot(&row, coeffs.col(a));
        }
    }
    let aka = coeffs.transpose().matmul(&ka);
    let mut tr_k = 0.0;
    let mut tr_kaw = 0.0;
    let mut tr_quad = 0.0;
    for (i, code) in codes.iter().enumerate() {
        tr_k += gram.diag(i);
        for &(a, wa) in code.entries() {
            tr_kaw += ka[(i, a)] * wa;
            for &(b, wb) in code.entries() {
                tr_quad += wa * aka[(a, b)] * wb;
            }
        }
    }
    Ok((tr_k - 2.0 * tr_kaw + tr_quad).max(0.0))
}

/// Input-space pre-images `support · A`, one atom per column (`d×M`).
pub fn export_atoms(dict: &Dictionary) -> Mat {
    dict.support().matmul(dict.coefficients())
}

struct Stopwatch {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

pub fn fit(data: &FeatureMatrix, kernel: &KernelSpec, config: &FitConfig) -> Result<(Dictionary, FitReport)> {
    fit_with_observer(data, kernel, config, &mut NoObserver)
}

pub fn fit_with_observer(
    data: &FeatureMatrix,
    kernel: &KernelSpec,
    config: &FitConfig,
    observer: &mut dyn FitObserver,
) -> Result<(Dictionary, FitReport)> {
    kernel.validate()?;
    config.validate(data.len())?;
    let gram = GramView::auto(data, *kernel, config.gram_cap)?;
    let n = data.len();
    let coding = config.coding();

    let idx = init_indices(&gram, config);
    let mut coeffs = basis_coefficients(n, &idx);
    let (mut sims, mut atom_gram) = atom_similarities(&gram, &coeffs, config.parallel);
    let mut atoms = config.atoms_m;
    let mut report = FitReport::default();
    let mut previous_codes: Option<Vec<SparseCode>> = None;

    for iteration in 1..=config.max_iters {
        let clock = Stopwatch::start();
        let guard = if config.monotone_coding && coding.rule == CodingRule::Nnk {
            previous_codes.as_deref()
        } else {
            None
        };
        let coded = map_indexed(n, config.parallel, |i| -> Result<SparseCode> {
            let (kii, s) = (gram.diag(i), sims.col(i));
            let fresh = code_from_similarities(kii, s, &atom_gram, &coding).map_err(|e| e.at_sample(i))?;
            let Some(prev) = guard.map(|p| &p[i]) else {
                return Ok(fresh);
            };
            let support: Vec<usize> = prev.indices().collect();
            if support.is_empty() || fresh.indices().eq(support.iter().copied()) {
                return Ok(fresh);
            }
            let kept = code_on_support(kii, s, &atom_gram, &support, &coding).map_err(|e| e.at_sample(i))?;
            Ok(if kept.error_against(s, &atom_gram) < fresh.error_against(s, &atom_gram) { kept } else { fresh })
        });
        let mut codes = Vec::with_capacity(n);
        for c in coded {
            codes.push(c.map_err(|e| e.at_iteration(iteration))?);
        }
        let errors: Vec<f64> =
            codes.iter().enumerate().map(|(i, c)| c.error_against(sims.col(i), &atom_gram)).collect();
        report.coding_seconds.push(clock.seconds());

        let clock = Stopwatch::start();
        let repair = handle_dead_atoms(&mut codes, &errors, atoms, config.dead_atom_policy)
            .map_err(|e| e.at_iteration(iteration))?;
        report.dead_atom_events.extend(repair.dead.iter().map(|&a| (iteration, a)));
        atoms = repair.atoms;

        coeffs = dictionary_update(&codes, atoms).map_err(|e| e.at_iteration(iteration))?;
        (sims, atom_gram) = atom_similarities(&gram, &coeffs, config.parallel);
        let obj: f64 = codes.iter().enumerate().map(|(i, c)| c.error_against(sims.col(i), &atom_gram)).sum();
        report.update_seconds.push(clock.seconds());
        report.objective_per_iter.push(obj);

        observer.on_iteration(&IterationState {
            iteration,
            objective: obj,
            dead_atoms: repair.dead.len(),
            codes: &codes,
            coefficients: &coeffs,
        });

        let stop = if obj == 0.0 {
            Some(StopReason::ObjectiveConverged)
        } else if previous_codes.as_ref() == Some(&codes) {
            Some(StopReason::CodesStable)
        } else if iteration > 1 && repair.dead.is_empty() {
            let prev = report.objective_per_iter[iteration - 2];
            let drop = prev - obj;
            (drop >= 0.0 && drop < config.rel_obj_tol * prev).then_some(StopReason::ObjectiveConverged)
        } else {
            None
        };
        if let Some(reason) = stop {
            report.converged = true;
            report.stop_reason = Some(reason);
            break;
        }
        previous_codes = Some(codes);
    }
    if report.stop_reason.is_none() {
        report.stop_reason = Some(StopReason::MaxIters);
    }

    let keep: Vec<usize> = (0..n).filter(|&p| (0..atoms).any(|a| coeffs[(p, a)] != 0.0)).collect();
    let meta = DictionaryMeta {
        sparsity: config.sparsity_k,
        iterations_run: report.iterations(),
        seed: config.seed,
    };
    let dict = Dictionary::new(
        data.matrix().select_cols(&keep),
        coeffs.select_rows(&keep),
        *kernel,
        meta,
    )?;
    Ok((dict, report))
}
