//! CSV ingestion, standardization and the synthetic arc dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nnk_core::{Classification, FeatureMatrix, Mat, SparseCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};

/// Reads a row-per-sample CSV into a column-per-sample [`FeatureMatrix`].
///
/// Lines starting with `#` are skipped. With `label_column`, that column is
/// parsed as a non-negative integer label and excluded from the features.
pub fn load_csv(path: &Path, has_header: bool, label_column: Option<usize>) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_csv(file, has_header, label_column)
}

/// Same as [`load_csv`], locating the label column by its header name `label`.
pub fn load_csv_auto(path: &Path) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(file);
    let headers = rdr.headers().map_err(|e| DataError::csv(0, e.to_string()))?.clone();
    let label = headers.iter().position(|h| h.trim() == "label");
    drop(rdr);
    load_csv(path, true, label)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool, label_column: Option<usize>) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut width: Option<usize> = None;
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            DataError::csv(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(DataError::csv(line, format!("expected {w} fields, found {}", record.len())));
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= record.len() {
                return Err(DataError::csv(line, format!("label column {lc} out of range")));
            }
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_column {
                let v: u32 = cell
                    .parse()
                    .map_err(|_| DataError::csv(line, format!("label `{cell}` is not a non-negative integer")))?;
                labels.push(v);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| DataError::csv(line, format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(DataError::csv(line, format!("non-finite value `{cell}`")));
                }
                features.push(v);
            }
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| DataError::csv(0, "no data rows".into()))?;
    let d = width - usize::from(label_column.is_some());
    if d == 0 {
        return Err(DataError::csv(0, "no feature columns".into()));
    }
    let data = Mat::from_col_major(d, rows, features);
    Ok(FeatureMatrix::new(data, label_column.map(|_| labels))?)
}

/// Writes one row per sample with a `x0..x{d-1}[,label]` header. Floats use
/// the shortest representation that parses back to the same bits.
pub fn write_csv(path: &Path, data: &FeatureMatrix, preamble: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv_to(&mut w, data, preamble).map_err(|e| DataError::io(path, e))?;
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn write_csv_to<W: Write>(w: &mut W, data: &FeatureMatrix, preamble: Option<&str>) -> std::io::Result<()> {
    write_preamble(w, preamble)?;
    let header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    write!(w, "{}", header.join(","))?;
    if data.labels().is_some() {
        write!(w, ",label")?;
    }
    writeln!(w)?;
    for i in 0..data.len() {
        let row: Vec<String> = data.sample(i).iter().map(|v| format!("{v:?}")).collect();
        write!(w, "{}", row.join(","))?;
        if let Some(l) = data.labels() {
            write!(w, ",{}", l[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per-feature affine map estimated on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(data: &FeatureMatrix) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(DataError::Invalid("standardization needs at least two samples".into()));
        }
        let d = data.dim();
        let mut means = vec![0.0; d];
        for i in 0..n {
            for (m, v) in means.iter_mut().zip(data.sample(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut vars = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in vars.iter_mut().zip(data.sample(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.into_iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Standardizer { means, stds })
    }

    pub fn apply(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if data.dim() != self.means.len() {
            return Err(nnk_core::Error::DimensionMismatch { expected: self.means.len(), got: data.dim() }.into());
        }
        let d = data.dim();
        let mut out = Vec::with_capacity(d * data.len());
        for i in 0..data.len() {
            for (j, v) in data.sample(i).iter().enumerate() {
                out.push((v - self.means[j]) / self.stds[j].max(STD_FLOOR));
            }
        }
        let labels = data.labels().map(<[u32]>::to_vec);
        Ok(FeatureMatrix::new(Mat::from_col_major(d, data.len(), out), labels)?.with_standardized(true))
    }
}

/// `(x − μ)/max(σ, 1e-12)` per feature, with population σ.
pub fn standardize(data: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<f64>, Vec<f64>)> {
    let s = Standardizer::fit(data)?;
    let out = s.apply(data)?;
    Ok((out, s.means, s.stds))
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_preamble<W: Write>(w: &mut W, preamble: Option<&str>) -> std::io::Result<()> {
    if let Some(p) = preamble {
        for line in p.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// Sparse codes as `sample,atom,weight` triples.
pub fn write_codes_csv(path: &Path, codes: &[SparseCode], preamble: Option<&str>) -> Result<()> {
    let run = || -> std::io::Result<()> {
        let mut w = create(path)?;
        write_preamble(&mut w, preamble)?;
        writeln!(w, "sample,atom,weight")?;
        for (i, c) in codes.iter().enumerate() {
            for &(a, v) in c.entries() {
                writeln!(w, "{i},{a},{v:?}")?;
            }
        }
        w.flush()
    };
    run().map_err(|e| DataError::io(path, e))
}

/// Codes as a dense `N×M` table, one row per sample.
pub fn write_dense_codes_csv(path: &Path, codes: &[SparseCode], atoms: usize, preamble: Option<&str>) -> Result<()> {
    let mut m = Mat::zeros(codes.len(), atoms);
    for (i, c) in codes.iter().enumerate() {
        for &(a, v) in c.entries() {
            m[(i, a)] = v;
        }
    }
    write_matrix_csv(path, &m, "w", preamble)
}

/// One CSV row per matrix row, columns `{prefix}0..`.
pub fn write_matrix_csv(path: &Path, m: &Mat, prefix: &str, preamble: Option<&str>) -> Result<()> {
    let run = || -> std::io::Result<()> {
        let mut w = create(path)?;
        write_preamble(&mut w, preamble)?;
        let header: Vec<String> = (0..m.cols()).map(|j| format!("{prefix}{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..m.rows() {
            let row: Vec<String> = (0..m.cols()).map(|j| format!("{:?}", m[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    run().map_err(|e| DataError::io(path, e))
}

/// `sample_index,predicted_label,e_0..e_{C-1}`
pub fn write_predictions_csv(path: &Path, result: &Classification, preamble: Option<&str>) -> Result<()> {
    let run = || -> std::io::Result<()> {
        let mut w = create(path)?;
        write_preamble(&mut w, preamble)?;
        let errs: Vec<String> = (0..result.errors.cols()).map(|j| format!("e_{j}")).collect();
        writeln!(w, "sample_index,predicted_label,{}", errs.join(","))?;
        for (q, label) in result.labels.iter().enumerate() {
            let row: Vec<String> = (0..result.errors.cols()).map(|j| format!("{:?}", result.errors[(q, j)])).collect();
            writeln!(w, "{q},{label},{}", row.join(","))?;
        }
        w.flush()
    };
    run().map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
    /// Radial gap between consecutive class arcs.
    pub offset: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { classes: 4, n_train: 600, n_test: 200, noise_sigma: 0.1, offset: 0.6, seed: 0 }
    }
}

pub const ARC_SPAN: f64 = 1.5 * std::f64::consts::PI;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(DataError::Invalid("at least two classes are required".into()));
        }
        if !self.n_train.is_multiple_of(self.classes) || !self.n_test.is_multiple_of(self.classes) {
            return Err(DataError::Invalid("sample counts must be divisible by the class count".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(DataError::Invalid("noise sigma must be finite and non-negative".into()));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(DataError::Invalid("offset must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Radius of class `c`'s arc.
    pub fn radius(&self, class: usize) -> f64 {
        1.0 + self.offset * class as f64
    }

    /// Starting angle of class `c`'s arc.
    pub fn rotation(&self, class: usize) -> f64 {
        2.0 * std::f64::consts::PI * class as f64 / self.classes as f64
    }

    /// Point at parameter `t ∈ [0, 3π/2)` on class `c`'s noiseless arc.
    pub fn arc_point(&self, class: usize, t: f64) -> [f64; 2] {
        let r = self.radius(class);
        let a = t + self.rotation(class);
        [r * a.cos(), r * a.sin()]
    }
}

/// Concentric three-quarter arcs about the origin, one per class.
///
/// Class `c` has radius `1 + offset·c` and starts at angle `2πc/C`; samples
/// draw `t ~ U[0, 3π/2)` and add `N(0, σ²)` noise per coordinate. The stream
/// is ChaCha8 seeded with `seed`: the training split first, then the test
/// split, each class-major; per sample one uniform for `t`, then two
/// uniforms turned into two normals by Box–Muller.
pub fn make_synthetic(spec: &SynthSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = synth_split(spec, spec.n_train, &mut rng)?;
    let test = synth_split(spec, spec.n_test, &mut rng)?;
    Ok((train, test))
}

fn synth_split(spec: &SynthSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
    let per_class = n / spec.classes;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for _ in 0..per_class {
            let t = rng.random::<f64>() * ARC_SPAN;
            let [x, y] = spec.arc_point(c, t);
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let r = (-2.0 * (1.0 - u1).ln()).sqrt();
            let phase = 2.0 * std::f64::consts::PI * u2;
            data.push(x + spec.noise_sigma * r * phase.cos());
            data.push(y + spec.noise_sigma * r * phase.sin());
            labels.push(c as u32);
        }
    }
    Ok(FeatureMatrix::new(Mat::from_col_major(2, n, data), Some(labels))?)
}

/// Euclidean distance from `p` to class `c`'s noiseless arc.
pub fn distance_to_arc(spec: &SynthSpec, class: usize, p: [f64; 2]) -> f64 {
    let r = spec.radius(class);
    let rho = p[0].hypot(p[1]);
    let angle = (p[1].atan2(p[0]) - spec.rotation(class)).rem_euclid(2.0 * std::f64::consts::PI);
    if angle < ARC_SPAN {
        (rho - r).abs()
    } else {
        let a = spec.arc_point(class, 0.0);
        let b = spec.arc_point(class, ARC_SPAN);
        let da = (p[0] - a[0]).hypot(p[1] - a[1]);
        let db = (p[0] - b[0]).hypot(p[1] - b[1]);
        da.min(db)
    }
}
