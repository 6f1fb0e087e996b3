#![allow(clippy::needless_range_loop)]

//! Shared generators and small dense oracles for the integration tests.
#![allow(dead_code)]

use nnk_core::{FeatureMatrix, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn normal_data(rng: &mut ChaCha8Rng, d: usize, n: usize) -> FeatureMatrix {
    FeatureMatrix::new(normal_mat(rng, d, n), None).unwrap()
}

/// A consistent coding instance `(BᵀB, Bᵀy)`: Gram of `n` feature vectors and
/// their inner products with a query `y`. `B` is rank deficient now and then.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Mat, Vec<f64>) {
    let rank = if rng.random_bool(0.2) { rng.random_range(1..=n) } else { n + 2 };
    let b = normal_mat(rng, rank, n);
    let g = b.transpose().matmul(&b);
    let kss = Mat::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let y: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(rng)).collect();
    let ks = b.tr_mul_vec(&y);
    (kss, ks)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Solves `a x = b` by Gauss–Jordan with full pivoting.
pub fn solve_dense(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).chain([b[i]]).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    for c in 0..n {
        let (mut pr, mut pc) = (c, c);
        for i in c..n {
            for j in c..n {
                if m[i][j].abs() > m[pr][pc].abs() {
                    pr = i;
                    pc = j;
                }
            }
        }
        m.swap(c, pr);
        for row in m.iter_mut() {
            row.swap(c, pc);
        }
        perm.swap(c, pc);
        let p = m[c][c];
        for j in c..=n {
            m[c][j] /= p;
        }
        for i in 0..n {
            if i != c {
                let f = m[i][c];
                for j in c..=n {
                    m[i][j] -= f * m[c][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in 0..n {
        x[perm[c]] = m[c][n];
    }
    x
}

/// `‖X − X·A·W‖²_F` computed on explicit features; `w` is `M×N`.
pub fn explicit_objective(x: &Mat, a: &Mat, w: &Mat) -> f64 {
    let r = x.matmul(&a.matmul(w));
    x.as_slice().iter().zip(r.as_slice()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Dense `M×N` matrix from sparse codes.
pub fn dense_codes(codes: &[nnk_core::SparseCode], atoms: usize) -> Mat {
    let mut w = Mat::zeros(atoms, codes.len());
    for (i, c) in codes.iter().enumerate() {
        for &(a, v) in c.entries() {
            w[(a, i)] = v;
        }
    }
    w
}
