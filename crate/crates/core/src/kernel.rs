//! Kernels, datasets and Gram access.
//!
//! Everything downstream sees the data only through kernel values, so the
//! RKHS map `φ` is never materialized.

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, sq_dist, Mat};

/// Default cap on the sample count for which a full Gram matrix is cached.
pub const DEFAULT_GRAM_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-‖x − y‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `xᵀy / (‖x‖‖y‖)`, undefined for zero vectors.
    Cosine,
    /// `xᵀy`
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian { sigma: 1.0 }
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidKernel(format!("gaussian sigma must be positive and finite, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Kernel value without dimension or zero-vector checks.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => libm::exp(-sq_dist(x, y) / (2.0 * sigma * sigma)),
            KernelSpec::Cosine => {
                let nx = libm::sqrt(dot(x, x));
                let ny = libm::sqrt(dot(y, y));
                dot(x, y) / (nx * ny)
            }
            KernelSpec::Linear => dot(x, y),
        }
    }

    /// κ(x, x)
    #[inline]
    pub(crate) fn self_similarity(&self, x: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { .. } | KernelSpec::Cosine => 1.0,
            KernelSpec::Linear => dot(x, x),
        }
    }

    pub(crate) fn check_vector(&self, x: &[f64]) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if matches!(self, KernelSpec::Cosine) && x.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(())
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian:sigma={sigma}"),
            KernelSpec::Cosine => f.write_str("cosine"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Grammar: `gaussian:sigma=<float>` | `gaussian` (σ = 1) | `cosine` | `linear`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        match (name, params) {
            ("gaussian", None) => Ok(KernelSpec::default()),
            ("gaussian", Some(p)) => {
                let value = p
                    .strip_prefix("sigma=")
                    .ok_or_else(|| Error::InvalidKernel(format!("expected sigma=<float>, got `{p}`")))?;
                let sigma: f64 = value
                    .parse()
                    .map_err(|_| Error::InvalidKernel(format!("bad sigma `{value}`")))?;
                KernelSpec::gaussian(sigma)
            }
            ("cosine", None) => Ok(KernelSpec::Cosine),
            ("linear", None) => Ok(KernelSpec::Linear),
            _ => Err(Error::InvalidKernel(String::from(s))),
        }
    }
}

/// κ(x, y)
pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    spec.check_vector(x)?;
    spec.check_vector(y)?;
    Ok(spec.eval_unchecked(x, y))
}

/// A dataset of `N` samples with `d` features, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Mat,
    labels: Option<Vec<u32>>,
    standardized: bool,
}

impl FeatureMatrix {
    pub fn new(data: Mat, labels: Option<Vec<u32>>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidConfig("feature matrix must be at least 1×1".to_string()));
        }
        if !data.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(l) = &labels {
            if l.len() != data.cols() {
                return Err(Error::LengthMismatch(l.len(), data.cols()));
            }
        }
        Ok(FeatureMatrix { data, labels, standardized: false })
    }

    /// Builds from one slice per sample.
    pub fn from_samples(samples: &[Vec<f64>], labels: Option<Vec<u32>>) -> Result<Self> {
        let d = samples.first().map_or(0, |s| s.len());
        let mut buf = Vec::with_capacity(d * samples.len());
        for s in samples {
            if s.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.len() });
            }
            buf.extend_from_slice(s);
        }
        FeatureMatrix::new(Mat::from_col_major(d, samples.len(), buf), labels)
    }

    pub fn with_standardized(mut self, flag: bool) -> Self {
        self.standardized = flag;
        self
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn len(&self) -> usize {
        self.data.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.cols() == 0
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.data.col(i)
    }

    pub fn matrix(&self) -> &Mat {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Columns `idx` in order, labels carried along.
    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data.select_cols(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            standardized: self.standardized,
        }
    }

    pub(crate) fn check_for(&self, spec: &KernelSpec) -> Result<()> {
        if matches!(spec, KernelSpec::Cosine) {
            for i in 0..self.len() {
                spec.check_vector(self.sample(i))?;
            }
        }
        Ok(())
    }
}

/// `Q×P` matrix of κ(queryᵩ, supportₚ).
pub fn cross_similarity(queries: &Mat, support: &Mat, spec: &KernelSpec) -> Result<Mat> {
    spec.validate()?;
    if queries.rows() != support.rows() {
        return Err(Error::DimensionMismatch { expected: support.rows(), got: queries.rows() });
    }
    for j in 0..queries.cols() {
        spec.check_vector(queries.col(j))?;
    }
    for j in 0..support.cols() {
        spec.check_vector(support.col(j))?;
    }
    Ok(Mat::from_fn(queries.cols(), support.cols(), |q, p| {
        spec.eval_unchecked(queries.col(q), support.col(p))
    }))
}

/// κ between one query and every support column.
pub(crate) fn similarities_to(query: &[f64], support: &Mat, spec: &KernelSpec) -> Vec<f64> {
    (0..support.cols()).map(|p| spec.eval_unchecked(query, support.col(p))).collect()
}

/// Read access to the Gram matrix of a dataset, cached or computed row by row.
#[derive(Debug, Clone)]
pub struct GramView<'a> {
    source: &'a FeatureMatrix,
    kernel: KernelSpec,
    cache: Option<Mat>,
}

impl<'a> GramView<'a> {
    /// Never materializes; every row is recomputed on request.
    pub fn on_the_fly(source: &'a FeatureMatrix, kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        source.check_for(&kernel)?;
        Ok(GramView { source, kernel, cache: None })
    }

    /// Caches the full matrix when `N ≤ cap`, otherwise falls back to rows on demand.
    pub fn auto(source: &'a FeatureMatrix, kernel: KernelSpec, cap: usize) -> Result<Self> {
        if source.len() <= cap {
            gram_with_cap(source, kernel, cap)
        } else {
            GramView::on_the_fly(source, kernel)
        }
    }

    pub fn source(&self) -> &FeatureMatrix {
        self.source
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    pub fn cache(&self) -> Option<&Mat> {
        self.cache.as_ref()
    }

    pub fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match &self.cache {
            // symmetric, so column i is row i
            Some(k) => Cow::Borrowed(k.col(i)),
            None => Cow::Owned(similarities_to(self.source.sample(i), self.source.matrix(), &self.kernel)),
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        match &self.cache {
            Some(k) => k[(i, i)],
            None => self.kernel.self_similarity(self.source.sample(i)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(k) => k[(i, j)],
            None => self.kernel.eval_unchecked(self.source.sample(i), self.source.sample(j)),
        }
    }

    /// Dense copy, materialized regardless of the cap.
    pub fn to_dense(&self) -> Mat {
        match &self.cache {
            Some(k) => k.clone(),
            None => Mat::from_fn(self.len(), self.len(), |i, j| self.get(i, j)),
        }
    }
}

/// Full cached Gram matrix, subject to [`DEFAULT_GRAM_CAP`].
pub fn gram<'a>(data: &'a FeatureMatrix, spec: &KernelSpec) -> Result<GramView<'a>> {
    gram_with_cap(data, *spec, DEFAULT_GRAM_CAP)
}

pub fn gram_with_cap(data: &FeatureMatrix, spec: KernelSpec, cap: usize) -> Result<GramView<'_>> {
    spec.validate()?;
    let n = data.len();
    if n > cap {
        return Err(Error::GramTooLarge { n, cap });
    }
    data.check_for(&spec)?;
    let mut k = Mat::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = if i == j {
                spec.eval_unchecked(data.sample(i), data.sample(i))
            } else {
                spec.eval_unchecked(data.sample(i), data.sample(j))
            };
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramView { source: data, kernel: spec, cache: Some(k) })
}
