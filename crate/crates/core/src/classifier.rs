//! One dictionary per class; a query goes to the class that reconstructs it best.

use alloc::vec::Vec;

use crate::coder::{code_from_similarities, CodingConfig};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::kernel::{FeatureMatrix, KernelSpec};
use crate::linalg::Mat;
use crate::par::map_indexed;
use crate::trainer::{fit, FitConfig, FitReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    dictionaries: Vec<Dictionary>,
    class_ids: Vec<u32>,
}

impl ClassifierModel {
    pub fn new(dictionaries: Vec<Dictionary>, class_ids: Vec<u32>) -> Result<Self> {
        if dictionaries.len() != class_ids.len() {
            return Err(Error::LengthMismatch(dictionaries.len(), class_ids.len()));
        }
        let Some(first) = dictionaries.first() else {
            return Err(Error::EmptyDictionary);
        };
        for d in &dictionaries[1..] {
            if d.kernel() != first.kernel() || d.meta().sparsity != first.meta().sparsity {
                return Err(Error::InvalidConfig("class dictionaries must share kernel and sparsity".into()));
            }
            if d.dim() != first.dim() {
                return Err(Error::DimensionMismatch { expected: first.dim(), got: d.dim() });
            }
        }
        let mut sorted = class_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("class ids must be unique".into()));
        }
        Ok(ClassifierModel { dictionaries, class_ids })
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dictionaries
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.dictionaries[0].kernel()
    }

    pub fn sparsity(&self) -> usize {
        self.dictionaries[0].meta().sparsity
    }

    pub fn dim(&self) -> usize {
        self.dictionaries[0].dim()
    }

    /// Coding configuration matching training.
    pub fn coding(&self) -> CodingConfig {
        CodingConfig::new(self.sparsity())
    }
}

/// Fits one dictionary per label, class `c` seeded with `seed + c`.
pub fn fit_per_class(
    data: &FeatureMatrix,
    kernel: &KernelSpec,
    config: &FitConfig,
) -> Result<(ClassifierModel, Vec<FitReport>)> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let mut class_ids: Vec<u32> = labels.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();

    let mut partitions = Vec::with_capacity(class_ids.len());
    for &c in &class_ids {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < config.atoms_m {
            return Err(Error::ClassTooSmall { class: c, count: idx.len(), atoms: config.atoms_m });
        }
        partitions.push(idx);
    }

    let mut dictionaries = Vec::with_capacity(class_ids.len());
    let mut reports = Vec::with_capacity(class_ids.len());
    for (&c, idx) in class_ids.iter().zip(&partitions) {
        let part = data.subset(idx);
        let cfg = FitConfig { seed: config.seed.wrapping_add(u64::from(c)), ..*config };
        let (dict, report) = fit(&part, kernel, &cfg)?;
        dictionaries.push(dict);
        reports.push(report);
    }
    Ok((ClassifierModel::new(dictionaries, class_ids)?, reports))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<u32>,
    /// `Q×C` reconstruction errors, column order following `class_ids`.
    pub errors: Mat,
}

/// Minimum-reconstruction-error labels; ties go to the smallest class id.
pub fn classify(queries: &FeatureMatrix, model: &ClassifierModel, config: &CodingConfig) -> Result<Classification> {
    config.validate()?;
    if queries.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: queries.dim() });
    }
    let c = model.dictionaries.len();
    let rows = map_indexed(queries.len(), config.parallel, |q| {
        let x = queries.sample(q);
        model
            .dictionaries
            .iter()
            .map(|dict| {
                let (kqq, sims) = dict.query_similarities(x)?;
                let code = code_from_similarities(kqq, &sims, dict.atom_gram(), config)?;
                Ok(code.error_against(&sims, dict.atom_gram()))
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.at_sample(q))
    });
    let mut errors = Mat::zeros(queries.len(), c);
    let mut labels = Vec::with_capacity(queries.len());
    for (q, row) in rows.into_iter().enumerate() {
        let row = row?;
        let mut best = 0;
        for j in 0..c {
            errors[(q, j)] = row[j];
            let better = row[j] < row[best]
                || (row[j] == row[best] && model.class_ids[j] < model.class_ids[best]);
            if better {
                best = j;
            }
        }
        labels.push(model.class_ids[best]);
    }
    Ok(Classification { labels, errors })
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}
