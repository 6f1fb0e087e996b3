//! Accuracy/time sweeps over dictionary size and coding-time scaling runs.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use nnk_core::{
    accuracy, classify, code_batch, fit, fit_per_class, CodingConfig, FeatureMatrix, FitConfig, KernelSpec, Mat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The configured sparsity.
    Nnk,
    /// Sparsity 1 on the same kernel.
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nnk => "nnk",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub atoms_grid: Vec<usize>,
    pub sparsity: usize,
    pub iters: usize,
    pub repeats: usize,
    pub seed: u64,
    #[serde(serialize_with = "as_display")]
    pub kernel: KernelSpec,
    pub baseline: bool,
    pub parallel: bool,
}

fn as_display<S: serde::Serializer>(k: &KernelSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(k)
}

impl BenchConfig {
    pub fn new(atoms_grid: Vec<usize>, sparsity: usize) -> Self {
        BenchConfig {
            atoms_grid,
            sparsity,
            iters: 10,
            repeats: 10,
            seed: 0,
            kernel: KernelSpec::default(),
            baseline: true,
            parallel: false,
        }
    }

    /// Seed used by repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub atoms: usize,
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub train_s: f64,
    pub test_s: f64,
    pub coding_s: f64,
    pub update_s: f64,
}

/// One fit-and-classify run.
pub fn run_once(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    kernel: &KernelSpec,
    fit_cfg: &FitConfig,
) -> Result<(f64, f64, f64, f64, f64)> {
    let truth = test.labels().ok_or(nnk_core::Error::MissingLabels)?;
    let t0 = Instant::now();
    let (model, reports) = fit_per_class(train, kernel, fit_cfg)?;
    let train_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let out = classify(test, &model, &model.coding().with_parallel(fit_cfg.parallel))?;
    let test_s = t1.elapsed().as_secs_f64();
    let acc = accuracy(&out.labels, truth)?;
    let coding_s = reports.iter().map(|r| r.coding_seconds.iter().sum::<f64>()).sum();
    let update_s = reports.iter().map(|r| r.update_seconds.iter().sum::<f64>()).sum();
    Ok((acc, train_s, test_s, coding_s, update_s))
}

/// Every `(atoms, repeat)` pair, the baseline run right after its NNK run.
pub fn run_bench(train: &FeatureMatrix, test: &FeatureMatrix, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.atoms_grid.is_empty() || cfg.repeats == 0 {
        return Err(DataError::Invalid("atoms grid and repeats must be non-empty".into()));
    }
    if test.labels().is_none() || train.labels().is_none() {
        return Err(nnk_core::Error::MissingLabels.into());
    }
    let mut methods = vec![(Method::Nnk, cfg.sparsity)];
    if cfg.baseline {
        methods.push((Method::Baseline, 1));
    }
    let mut rows = Vec::new();
    for &atoms in &cfg.atoms_grid {
        for repeat in 0..cfg.repeats {
            let seed = cfg.repeat_seed(repeat);
            for &(method, k) in &methods {
                let mut fit_cfg = FitConfig::new(atoms, k).with_seed(seed).with_max_iters(cfg.iters);
                fit_cfg.parallel = cfg.parallel;
                let (accuracy, train_s, test_s, coding_s, update_s) = run_once(train, test, &cfg.kernel, &fit_cfg)?;
                rows.push(BenchRow { method, atoms, repeat, seed, accuracy, train_s, test_s, coding_s, update_s });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub atoms: usize,
    pub runs: usize,
    pub accuracy: Stat,
    pub train_s: Stat,
    pub test_s: Stat,
    pub coding_s: Stat,
    pub update_s: Stat,
    /// Repeats where NNK accuracy was at least the baseline's (NNK rows only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats_at_least_baseline: Option<usize>,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, Method)> = rows.iter().map(|r| (r.atoms, r.method)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(atoms, method)| {
            let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.atoms == atoms && r.method == method).collect();
            let stat = |f: fn(&BenchRow) -> f64| Stat::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let wins = (method == Method::Nnk)
                .then(|| {
                    let base: Vec<&BenchRow> =
                        rows.iter().filter(|r| r.atoms == atoms && r.method == Method::Baseline).collect();
                    (!base.is_empty()).then(|| {
                        sel.iter()
                            .filter(|n| base.iter().any(|b| b.repeat == n.repeat && n.accuracy >= b.accuracy))
                            .count()
                    })
                })
                .flatten();
            SummaryRow {
                method,
                atoms,
                runs: sel.len(),
                accuracy: stat(|r| r.accuracy),
                train_s: stat(|r| r.train_s),
                test_s: stat(|r| r.test_s),
                coding_s: stat(|r| r.coding_s),
                update_s: stat(|r| r.update_s),
                repeats_at_least_baseline: wins,
            }
        })
        .collect()
}

pub fn write_rows_csv(path: &Path, rows: &[BenchRow], preamble: Option<&str>) -> Result<()> {
    use std::io::Write;
    let run = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        if let Some(p) = preamble {
            for line in p.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        writeln!(w, "method,atoms,repeat,seed,accuracy,train_s,test_s,coding_s,update_s")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{:?},{:?},{:?},{:?},{:?}",
                r.method, r.atoms, r.repeat, r.seed, r.accuracy, r.train_s, r.test_s, r.coding_s, r.update_s
            )?;
        }
        w.flush()
    };
    run().map_err(|e| DataError::io(path, e))
}

/// Random train/test split keeping each class's share; `test_fraction` of
/// every class goes to the test side.
pub fn stratified_split(data: &FeatureMatrix, test_fraction: f64, seed: u64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let labels = data.labels().ok_or(nnk_core::Error::MissingLabels)?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Invalid("test fraction must lie in (0, 1)".into()));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        // Fisher–Yates with the documented stream
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
        te.extend_from_slice(&idx[..n_test]);
        tr.extend_from_slice(&idx[n_test..]);
    }
    tr.sort_unstable();
    te.sort_unstable();
    Ok((data.subset(&tr), data.subset(&te)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingConfig {
    pub atoms: usize,
    pub sparsity: usize,
    pub dim: usize,
    /// Samples used to fit the fixed dictionary.
    pub train_samples: usize,
    /// Best-of timing repetitions per size.
    pub trials: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { atoms: 100, sparsity: 10, dim: 32, train_samples: 1000, trials: 3, seed: 0 }
    }
}

fn gaussian_cloud(dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
    let mut v = Vec::with_capacity(dim * n);
    while v.len() < dim * n {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        v.push(r * a.cos());
        v.push(r * a.sin());
    }
    v.truncate(dim * n);
    Ok(FeatureMatrix::new(Mat::from_col_major(dim, n, v), None)?)
}

/// Sequential coding time against one fixed dictionary for each query count.
///
/// The dictionary is fitted once on a separate Gaussian sample with bandwidth
/// `sqrt(dim)`; each size is timed `trials` times and the fastest run kept.
pub fn coding_scaling(sizes: &[usize], cfg: &ScalingConfig) -> Result<Vec<ScalingPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = gaussian_cloud(cfg.dim, cfg.train_samples, &mut rng)?;
    let kernel = KernelSpec::gaussian((cfg.dim as f64).sqrt())?;
    let fit_cfg = FitConfig::new(cfg.atoms, cfg.sparsity).with_seed(cfg.seed).with_max_iters(2);
    let (dict, _) = fit(&train, &kernel, &fit_cfg)?;
    let coding = CodingConfig::new(cfg.sparsity);
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let queries = gaussian_cloud(cfg.dim, n, &mut rng)?;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.trials.max(1) {
            let t = Instant::now();
            let codes = code_batch(&queries, &dict, &coding);
            let secs = t.elapsed().as_secs_f64();
            if let Some(e) = codes.into_iter().find_map(|c| c.err()) {
                return Err(e.into());
            }
            best = best.min(secs);
        }
        out.push(ScalingPoint { n, seconds: best });
    }
    Ok(out)
}

/// Least-squares slope of `ln(seconds)` against `ln(n)`.
pub fn loglog_slope(points: &[ScalingPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
