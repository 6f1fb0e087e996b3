#![allow(clippy::needless_range_loop)]
mod common;

use common::*;
use nnk_core::coder::{code_from_similarities, code_on_support, CodingRule};
use nnk_core::oracle::{best_subset_code, nnls_enumerate, quadratic_objective, OracleBudget};
use nnk_core::{
    code_batch, code_one, nnls_on_support, reconstruction_error, select_candidates, CodingConfig, Dictionary,
    DictionaryMeta, Error, FeatureMatrix, KernelSpec, Mat, SparseCode,
};
use proptest::prelude::*;
use rand::Rng;

fn basis_dict(support: Mat, kernel: KernelSpec) -> Dictionary {
    let p = support.cols();
    Dictionary::new(support, Mat::identity(p), kernel, DictionaryMeta::default()).unwrap()
}

/// Dictionary with dense non-negative mixing, as after a few updates.
fn mixed_dict(seed: u64, d: usize, p: usize, m: usize, kernel: KernelSpec) -> Dictionary {
    let mut r = rng(seed);
    let support = normal_mat(&mut r, d, p);
    let a = Mat::from_fn(p, m, |i, j| if i == j % p || r.random_bool(0.3) { r.random_range(0.1..1.0) } else { 0.0 });
    Dictionary::new(support, a, kernel, DictionaryMeta::default()).unwrap()
}

fn kkt_residual(kss: &Mat, ks: &[f64], theta: &[f64]) -> f64 {
    let g = kss.mul_vec(theta);
    let scale = ks.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for j in 0..ks.len() {
        let r = g[j] - ks[j];
        let v = if theta[j] > 0.0 { r.abs() } else { (-r).max(0.0) };
        worst = worst.max(v / scale);
    }
    worst
}

#[test]
fn candidate_examples() {
    assert_eq!(select_candidates(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
    assert_eq!(select_candidates(&[0.5, 0.5, 0.5], 1).unwrap(), vec![0]);
    assert_eq!(select_candidates(&[0.5, 0.2], 9).unwrap(), vec![0, 1]);
    assert_eq!(select_candidates(&[], 1), Err(Error::EmptyDictionary));
}

#[test]
fn candidates_match_full_sort() {
    let mut r = rng(1);
    for _ in 0..50 {
        let sims: Vec<f64> = (0..50).map(|_| (r.random_range(0..20) as f64) / 7.0).collect();
        let mut order: Vec<usize> = (0..50).collect();
        order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
        let mut expect = order[..7].to_vec();
        expect.sort();
        assert_eq!(select_candidates(&sims, 7).unwrap(), expect);
    }
}

#[test]
fn nnls_examples() {
    assert_eq!(nnls_on_support(&Mat::identity(1), &[1.0], 10).unwrap(), vec![1.0]);
    assert_eq!(nnls_on_support(&Mat::identity(2), &[0.5, -0.3], 10).unwrap(), vec![0.5, 0.0]);
    let asym = Mat::from_row_major(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert_eq!(nnls_on_support(&asym, &[1.0, 1.0], 10), Err(Error::NotSymmetric));
}

#[test]
fn nnls_matches_enumeration_on_500_instances() {
    let mut r = rng(2);
    let budget = OracleBudget::default();
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let (kss, ks) = random_instance(&mut r, n);
        let theta = nnls_on_support(&kss, &ks, 1000).unwrap();
        let oracle = nnls_enumerate(&kss, &ks, &budget).unwrap();
        let f = quadratic_objective(&kss, &ks, &theta);
        let g = quadratic_objective(&kss, &ks, &oracle);
        assert!((f - g).abs() <= 1e-8 * g.abs().max(1.0), "{f} vs {g}");
        assert!(kkt_residual(&kss, &ks, &theta) <= 1e-8);
        assert!(theta.iter().all(|&t| t >= 0.0));
    }
}

#[test]
fn exact_atom_hit() {
    let mut r = rng(3);
    let support = normal_mat(&mut r, 4, 6);
    let dict = basis_dict(support.clone(), KernelSpec::default());
    let code = code_one(support.col(2), &dict, &CodingConfig::new(3)).unwrap();
    assert_eq!(code.entries(), &[(2, 1.0)]);
    let (_, sims) = dict.query_similarities(support.col(2)).unwrap();
    assert_eq!(reconstruction_error(&code, &sims, &dict).unwrap(), 0.0);
}

#[test]
fn symmetric_linear_instance() {
    let support = Mat::from_col_major(2, 2, vec![1.0, 1.0, 1.0, -1.0]);
    let dict = basis_dict(support, KernelSpec::Linear);
    let code = code_one(&[1.0, 0.0], &dict, &CodingConfig::new(2)).unwrap();
    assert_eq!(code.indices().collect::<Vec<_>>(), vec![0, 1]);
    assert!((code.weight(0) - 0.5).abs() < 1e-15 && (code.weight(1) - 0.5).abs() < 1e-15);
}

#[test]
fn empty_code_when_nothing_is_similar() {
    let dict = basis_dict(Mat::from_col_major(2, 2, vec![1.0, 0.0, 3.0, 0.0]), KernelSpec::Linear);
    let code = code_one(&[0.0, 2.0], &dict, &CodingConfig::new(2)).unwrap();
    assert!(code.is_empty());
    let (kqq, sims) = dict.query_similarities(&[0.0, 2.0]).unwrap();
    assert_eq!(reconstruction_error(&code, &sims, &dict).unwrap(), kqq);
    assert_eq!(kqq, 4.0);
}

#[test]
fn gaussian_codes_vs_best_subset() {
    let budget = OracleBudget::default();
    let mut agree = 0;
    let mut eligible = 0;
    for seed in 0..200 {
        let mut r = rng(1000 + seed);
        let dict = basis_dict(normal_mat(&mut r, 2, 5), KernelSpec::default());
        let q: Vec<f64> = (0..2).map(|_| r.random_range(-1.5..1.5)).collect();
        let code = code_one(&q, &dict, &CodingConfig::new(3)).unwrap();
        let (kqq, sims) = dict.query_similarities(&q).unwrap();
        let best = best_subset_code(&q, &dict, 3, &budget).unwrap();
        let cands = select_candidates(&sims, 3).unwrap();
        let err = reconstruction_error(&code, &sims, &dict).unwrap();
        assert!(err >= best.objective - 1e-10);
        assert!(err <= kqq);
        if best.support.iter().all(|a| cands.contains(a)) {
            eligible += 1;
            assert!((err - best.objective).abs() <= 1e-8, "seed {seed}: {err} vs {}", best.objective);
            agree += 1;
        }
    }
    assert_eq!(agree, eligible);
    assert!(eligible > 100, "only {eligible} eligible instances");
}

#[test]
fn batch_matches_single_and_permutation() {
    let dict = mixed_dict(4, 3, 12, 8, KernelSpec::gaussian(1.5).unwrap());
    let mut r = rng(5);
    let queries = normal_data(&mut r, 3, 64);
    let cfg = CodingConfig::new(4);
    let batch: Vec<SparseCode> = code_batch(&queries, &dict, &cfg).into_iter().map(Result::unwrap).collect();
    let par: Vec<SparseCode> =
        code_batch(&queries, &dict, &cfg.with_parallel(true)).into_iter().map(Result::unwrap).collect();
    assert_eq!(batch, par);
    for i in 0..64 {
        assert_eq!(batch[i], code_one(queries.sample(i), &dict, &cfg).unwrap());
    }
    let one = queries.subset(&[7]);
    assert_eq!(code_batch(&one, &dict, &cfg)[0].as_ref().unwrap(), &batch[7]);
    let perm: Vec<usize> = (0..64).rev().collect();
    let rev = code_batch(&queries.subset(&perm), &dict, &cfg);
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(rev[j].as_ref().unwrap(), &batch[i]);
    }
}

#[test]
fn batch_reports_failing_sample_and_continues() {
    let dict = basis_dict(Mat::from_col_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]), KernelSpec::Cosine);
    let q = FeatureMatrix::from_samples(&[vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 1.0]], None).unwrap();
    let out = code_batch(&q, &dict, &CodingConfig::new(2));
    assert!(out[0].is_ok() && out[2].is_ok());
    assert_eq!(out[1].as_ref().unwrap_err(), &Error::Sample { index: 1, source: Box::new(Error::ZeroVector) });
}

#[test]
fn max_iter_error_carries_iterate() {
    let ones = Mat::from_row_major(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    match nnls_on_support(&ones, &[1.0, 1.0], 1) {
        Ok(t) => assert_eq!(t, vec![1.0, 0.0]),
        Err(Error::NnlsMaxIter { best, .. }) => assert_eq!(best.len(), 2),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn nearest_atom_rule_uses_rkhs_distance() {
    // atom 1 is more similar (larger dot product) but atom 0 is nearer
    let dict = basis_dict(Mat::from_col_major(1, 2, vec![1.0, 4.0]), KernelSpec::Linear);
    let code = code_one(&[1.2], &dict, &CodingConfig::new(1)).unwrap();
    assert_eq!(code.entries(), &[(0, 1.0)]);
    let nnk = code_one(&[1.2], &dict, &CodingConfig::new(1).with_rule(CodingRule::Nnk)).unwrap();
    assert_eq!(nnk.indices().collect::<Vec<_>>(), vec![1]);
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 2usize..8, 1usize..10, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nnls_kkt_and_enumeration((seed, n, _, _) in instance()) {
        let mut r = rng(seed);
        let n = n.min(6);
        let (kss, ks) = random_instance(&mut r, n);
        let theta = nnls_on_support(&kss, &ks, 1000).unwrap();
        prop_assert!(kkt_residual(&kss, &ks, &theta) <= 1e-8);
        let oracle = nnls_enumerate(&kss, &ks, &OracleBudget::default()).unwrap();
        let (f, g) = (quadratic_objective(&kss, &ks, &theta), quadratic_objective(&kss, &ks, &oracle));
        prop_assert!((f - g).abs() <= 1e-8 * g.abs().max(1.0));
    }

    #[test]
    fn code_shape_invariants((seed, m, k, d) in instance()) {
        let dict = mixed_dict(seed, d, m + 2, m, KernelSpec::gaussian(1.0).unwrap());
        let mut r = rng(seed ^ 1);
        let q: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let code = code_one(&q, &dict, &CodingConfig::new(k)).unwrap();
        prop_assert!(code.len() <= k.min(m));
        prop_assert!(code.entries().iter().all(|&(_, w)| w > 0.0));
        prop_assert!(code.entries().windows(2).all(|w| w[0].0 < w[1].0));
        let (kqq, sims) = dict.query_similarities(&q).unwrap();
        let err = reconstruction_error(&code, &sims, &dict).unwrap();
        prop_assert!(err >= 0.0);
        // the zero code is always feasible for the non-negative solve
        if k >= 2 {
            prop_assert!(err <= kqq + 1e-12);
        }
    }

    #[test]
    fn never_worse_than_best_single_candidate((seed, m, k, d) in instance()) {
        let dict = mixed_dict(seed, d, m + 3, m, KernelSpec::gaussian(0.9).unwrap());
        let mut r = rng(seed ^ 2);
        let q: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let cfg = CodingConfig::new(k.max(2));
        let code = code_one(&q, &dict, &cfg).unwrap();
        let (kqq, sims) = dict.query_similarities(&q).unwrap();
        let err = reconstruction_error(&code, &sims, &dict).unwrap();
        let top = select_candidates(&sims, 1).unwrap()[0];
        let g = dict.atom_gram()[(top, top)];
        let single = if sims[top] > 0.0 { kqq - sims[top] * sims[top] / g } else { kqq };
        prop_assert!(err <= single.max(0.0) + 1e-10 * kqq.max(1.0), "{} > {}", err, single);
    }

    #[test]
    fn duplicate_atoms_are_not_both_used(seed in any::<u64>(), p in 2usize..7, dup in 0usize..7) {
        let mut r = rng(seed);
        let dup = dup % p;
        let support = normal_mat(&mut r, 2, p);
        let a = Mat::from_fn(p, p + 1, |i, j| if j < p { f64::from(u8::from(i == j)) } else { f64::from(u8::from(i == dup)) });
        let dict = Dictionary::new(support.clone(), a, KernelSpec::default(), DictionaryMeta::default()).unwrap();
        let q: Vec<f64> = support.col(dup).iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
        let code = code_one(&q, &dict, &CodingConfig::new(p + 1)).unwrap();
        prop_assert!(!(code.weight(dup) > 0.0 && code.weight(p) > 0.0), "{:?}", code.entries());
    }

    #[test]
    fn linear_kernel_error_is_input_space_error((seed, m, k, d) in instance()) {
        let dict = mixed_dict(seed, d, m + 1, m, KernelSpec::Linear);
        let mut r = rng(seed ^ 3);
        let q: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let code = code_one(&q, &dict, &CodingConfig::new(k.max(2))).unwrap();
        let (_, sims) = dict.query_similarities(&q).unwrap();
        let kernel_err = reconstruction_error(&code, &sims, &dict).unwrap();
        let atoms = dict.support().matmul(dict.coefficients());
        let mut recon = vec![0.0; d];
        for &(a, w) in code.entries() {
            for t in 0..d {
                recon[t] += w * atoms[(t, a)];
            }
        }
        let explicit: f64 = q.iter().zip(&recon).map(|(x, y)| (x - y) * (x - y)).sum();
        prop_assert!((kernel_err - explicit).abs() <= 1e-10 * explicit.max(1.0));
    }

    #[test]
    fn support_solve_matches_direct((seed, m, _, d) in instance()) {
        let dict = mixed_dict(seed, d, m + 1, m, KernelSpec::gaussian(1.2).unwrap());
        let mut r = rng(seed ^ 4);
        let q: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let (kqq, sims) = dict.query_similarities(&q).unwrap();
        let cfg = CodingConfig::new(m);
        let full: Vec<usize> = (0..m).collect();
        let a = code_on_support(kqq, &sims, dict.atom_gram(), &full, &cfg).unwrap();
        let b = code_from_similarities(kqq, &sims, dict.atom_gram(), &cfg).unwrap();
        if m >= 2 {
            prop_assert_eq!(a, b);
        }
    }
}
