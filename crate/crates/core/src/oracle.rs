//! Brute-force references for tests: exhaustive active-set enumeration,
//! exhaustive best-subset coding and a textbook Lloyd k-means.
//!
//! Nothing here shares a solve routine with the production path. Linear
//! systems use Gaussian elimination with partial pivoting instead of
//! Cholesky, and Lloyd works on explicit coordinates instead of kernels.

use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::trainer::sample_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Largest candidate set enumerated; at most 12.
    pub max_support: usize,
    pub max_samples: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_support: 12, max_samples: 10_000 }
    }
}

/// Solves `a x = b` by Gaussian elimination; `None` when a pivot is negligible.
pub fn gauss_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 {
        return Some(Vec::new());
    }
    if scale == 0.0 {
        return None;
    }
    // augmented rows
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            r.push(b[i]);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

/// `θᵀKθ − 2kᵀθ`
pub fn quadratic_objective(kss: &Mat, ks: &[f64], theta: &[f64]) -> f64 {
    let n = ks.len();
    let mut q = 0.0;
    let mut l = 0.0;
    for i in 0..n {
        l += ks[i] * theta[i];
        for j in 0..n {
            q += theta[i] * kss[(i, j)] * theta[j];
        }
    }
    q - 2.0 * l
}

/// Global minimizer of `θᵀKθ − 2kᵀθ` over `θ ≥ 0` by trying every active set.
pub fn nnls_enumerate(kss: &Mat, ks: &[f64], budget: &OracleBudget) -> Result<Vec<f64>> {
    let n = ks.len();
    if n > budget.max_support.min(12) {
        return Err(Error::BudgetExceeded { size: n, max: budget.max_support.min(12) });
    }
    if kss.rows() != n || kss.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: kss.rows() });
    }
    let mut best = vec![0.0; n];
    let mut best_f = 0.0;
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        let sub = kss.select(&idx);
        let rhs: Vec<f64> = idx.iter().map(|&j| ks[j]).collect();
        let Some(z) = gauss_solve(&sub, &rhs) else {
            continue;
        };
        if z.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut theta = vec![0.0; n];
        for (&j, &v) in idx.iter().zip(&z) {
            theta[j] = v.max(0.0);
        }
        let f = quadratic_objective(kss, ks, &theta);
        if f < best_f {
            best_f = f;
            best = theta;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCode {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    /// `‖φ_q − ΦA_Sθ‖²`
    pub objective: f64,
}

/// Best non-negative code over all supports of size `≤ k`.
pub fn best_subset_code(query: &[f64], dict: &Dictionary, k: usize, budget: &OracleBudget) -> Result<SubsetCode> {
    let m = dict.atom_count();
    if m > budget.max_support.min(12) {
        return Err(Error::BudgetExceeded { size: m, max: budget.max_support.min(12) });
    }
    let (kqq, sims) = dict.query_similarities(query)?;
    let g = dict.atom_gram();
    let mut best = SubsetCode { support: Vec::new(), weights: Vec::new(), objective: kqq.max(0.0) };
    for mask in 1u32..(1u32 << m) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let kss = g.select(&idx);
        let ks: Vec<f64> = idx.iter().map(|&j| sims[j]).collect();
        let theta = nnls_enumerate(&kss, &ks, budget)?;
        let obj = (kqq + quadratic_objective(&kss, &ks, &theta)).max(0.0);
        if obj < best.objective {
            let (support, weights) = idx.iter().zip(&theta).filter(|(_, &w)| w > 0.0).map(|(&i, &w)| (i, w)).unzip();
            best = SubsetCode { support, weights, objective: obj };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydTrace {
    /// Assignment of every sample, one vector per iteration.
    pub assignments: Vec<Vec<usize>>,
    /// `d×M` centroids after each iteration's update.
    pub centroids: Vec<Mat>,
    /// `(iteration, cluster)` whenever an empty cluster was refilled.
    pub empty_events: Vec<(usize, usize)>,
}

/// Lloyd's k-means on the columns of `data` (`d×N`).
///
/// Centroids start at the same seeded sample draw the trainer uses. Ties go
/// to the lowest centroid index; an empty cluster takes the not-yet-moved
/// sample farthest from its centroid. Stops after an iteration whose
/// assignments repeat the previous one, or at `max_iters`.
pub fn lloyd_reference(data: &Mat, clusters: usize, seed: u64, max_iters: usize) -> Result<LloydTrace> {
    let (d, n) = (data.rows(), data.cols());
    if clusters == 0 || clusters > n {
        return Err(Error::TooFewSamples { atoms: clusters, samples: n });
    }
    let init = sample_indices(n, clusters, seed);
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| data.col(i).to_vec()).collect();
    let mut trace = LloydTrace { assignments: Vec::new(), centroids: Vec::new(), empty_events: Vec::new() };

    for iteration in 1..=max_iters {
        let mut assign = vec![0usize; n];
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let x = data.col(i);
            let mut best = (0usize, f64::INFINITY);
            for (c, cen) in centroids.iter().enumerate() {
                let mut s = 0.0;
                for t in 0..d {
                    s += (x[t] - cen[t]) * (x[t] - cen[t]);
                }
                if s < best.1 {
                    best = (c, s);
                }
            }
            assign[i] = best.0;
            dist[i] = best.1;
        }

        let mut counts = vec![0usize; clusters];
        for &a in &assign {
            counts[a] += 1;
        }
        let mut moved = vec![false; n];
        while counts.contains(&0) {
            let empty: Vec<usize> = (0..clusters).filter(|&c| counts[c] == 0).collect();
            for c in empty {
                let mut far: Option<usize> = None;
                for i in 0..n {
                    if !moved[i] && far.is_none_or(|f| dist[i] > dist[f]) {
                        far = Some(i);
                    }
                }
                let i = far.expect("more clusters than samples");
                moved[i] = true;
                counts[assign[i]] -= 1;
                assign[i] = c;
                counts[c] += 1;
                trace.empty_events.push((iteration, c));
            }
        }

        let mut sums = vec![vec![0.0; d]; clusters];
        for i in 0..n {
            for t in 0..d {
                sums[assign[i]][t] += data[(t, i)];
            }
        }
        for c in 0..clusters {
            for t in 0..d {
                centroids[c][t] = sums[c][t] / counts[c] as f64;
            }
        }
        let stable = trace.assignments.last() == Some(&assign);
        trace.assignments.push(assign);
        trace.centroids.push(Mat::from_col_major(d, clusters, centroids.concat()));
        if stable {
            break;
        }
    }
    Ok(trace)
}
