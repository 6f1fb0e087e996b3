//! Binary matrix and model files.
//!
//! A matrix file is `b"NNKM"`, a `u32` version, `u64` rows, `u64` cols and a
//! row-major `f64` payload, all little-endian.
//!
//! A model file is `b"NNKMODEL"`, a `u32` version, a `u64` length and that
//! many bytes of JSON header, followed by the sections named in the header.
//! Each section is a `u64` byte length and an embedded matrix file.

use std::fs;
use std::path::Path;

use nnk_core::{ClassifierModel, Dictionary, DictionaryMeta, KernelSpec, Mat};
use serde::{Deserialize, Serialize};

use crate::dataio::Standardizer;
use crate::error::{DataError, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"NNKM";
pub const MATRIX_VERSION: u32 = 1;
pub const MODEL_MAGIC: &[u8; 8] = b"NNKMODEL";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_matrix(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.rows() * m.cols());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Byte cursor that names the section being read in every error.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(DataError::format(
                self.file,
                section,
                format!("truncated: need {n} bytes at offset {}, {} left", self.pos, self.bytes.len() - self.pos),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }

    fn len(&mut self, section: &str) -> Result<usize> {
        let v = self.u64(section)?;
        usize::try_from(v).map_err(|_| DataError::format(self.file, section, format!("length {v} too large")))
    }
}

fn decode_matrix_at(r: &mut Reader<'_>, section: &str) -> Result<Mat> {
    if r.take(4, section)? != MATRIX_MAGIC {
        return Err(DataError::format(r.file, section, "bad matrix magic"));
    }
    let version = r.u32(section)?;
    if version != MATRIX_VERSION {
        return Err(DataError::Version { found: version, expected: MATRIX_VERSION });
    }
    let rows = r.len(section)?;
    let cols = r.len(section)?;
    let bytes = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| DataError::format(r.file, section, "matrix size overflows"))?;
    let payload = r.take(bytes, section)?;
    let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(DataError::format(r.file, section, "non-finite value"));
    }
    Ok(Mat::from_row_major(rows, cols, &values))
}

/// Parses a complete matrix file image.
pub fn decode_matrix(bytes: &[u8], file: &Path) -> Result<Mat> {
    let mut r = Reader { bytes, pos: 0, file };
    let m = decode_matrix_at(&mut r, "matrix")?;
    if r.pos != bytes.len() {
        return Err(DataError::format(file, "matrix", "trailing bytes"));
    }
    Ok(m)
}

pub fn save_matrix(m: &Mat, path: &Path) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| DataError::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Mat> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_matrix(&bytes, path)
}

/// What a model file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dictionary(Dictionary),
    Classifier(ClassifierModel),
}

impl Model {
    pub fn dictionaries(&self) -> &[Dictionary] {
        match self {
            Model::Dictionary(d) => std::slice::from_ref(d),
            Model::Classifier(c) => c.dictionaries(),
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.dictionaries()[0].kernel()
    }
}

/// A model with the preprocessing it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: Model,
    pub standardizer: Option<Standardizer>,
    /// Free-form run configuration echoed into the header.
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictHeader {
    #[serde(rename = "M")]
    atoms: usize,
    #[serde(rename = "P")]
    support: usize,
    k: usize,
    iterations_run: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    kernel: String,
    d: usize,
    #[serde(rename = "M")]
    atoms: Vec<usize>,
    k: usize,
    #[serde(rename = "P")]
    support: Vec<usize>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_ids: Option<Vec<u32>>,
    seed: u64,
    dictionaries: Vec<DictHeader>,
    sections: Vec<String>,
    #[serde(default)]
    config: serde_json::Value,
}

pub fn encode_model(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let dicts = bundle.model.dictionaries();
    let first = &dicts[0];
    let mut sections: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, d) in dicts.iter().enumerate() {
        sections.push((format!("support[{i}]"), encode_matrix(d.support())));
        sections.push((format!("coefficients[{i}]"), encode_matrix(d.coefficients())));
    }
    if let Some(s) = &bundle.standardizer {
        let m = Mat::from_fn(2, s.means.len(), |r, c| if r == 0 { s.means[c] } else { s.stds[c] });
        sections.push(("standardization".into(), encode_matrix(&m)));
    }
    let class_ids = match &bundle.model {
        Model::Classifier(c) => Some(c.class_ids().to_vec()),
        Model::Dictionary(_) => None,
    };
    let header = Header {
        format_version: MODEL_VERSION,
        kind: if class_ids.is_some() { "classifier" } else { "dictionary" }.into(),
        kernel: first.kernel().to_string(),
        d: first.dim(),
        atoms: dicts.iter().map(Dictionary::atom_count).collect(),
        k: first.meta().sparsity,
        support: dicts.iter().map(Dictionary::support_len).collect(),
        classes: class_ids.as_ref().map(Vec::len),
        class_ids,
        seed: first.meta().seed,
        dictionaries: dicts
            .iter()
            .map(|d| DictHeader {
                atoms: d.atom_count(),
                support: d.support_len(),
                k: d.meta().sparsity,
                iterations_run: d.meta().iterations_run,
                seed: d.meta().seed,
            })
            .collect(),
        sections: sections.iter().map(|(n, _)| n.clone()).collect(),
        config: bundle.config.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, bytes) in sections {
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8], file: &Path) -> Result<ModelBundle> {
    let mut r = Reader { bytes, pos: 0, file };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(DataError::format(file, "magic", "not a model file"));
    }
    let version = r.u32("header")?;
    if version != MODEL_VERSION {
        return Err(DataError::Version { found: version, expected: MODEL_VERSION });
    }
    let len = r.len("header")?;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)?;
    if header.format_version != MODEL_VERSION {
        return Err(DataError::Version { found: header.format_version, expected: MODEL_VERSION });
    }
    let kernel: KernelSpec = header.kernel.parse()?;

    let mut mats = Vec::with_capacity(header.sections.len());
    for name in &header.sections {
        let size = r.len(name)?;
        let body = r.take(size, name)?;
        let mut inner = Reader { bytes: body, pos: 0, file };
        let m = decode_matrix_at(&mut inner, name)?;
        if inner.pos != body.len() {
            return Err(DataError::format(file, name, "section length disagrees with matrix size"));
        }
        mats.push((name.as_str(), m));
    }
    if r.pos != bytes.len() {
        return Err(DataError::format(file, "trailer", "trailing bytes after last section"));
    }

    let mut dictionaries = Vec::with_capacity(header.dictionaries.len());
    let mut standardizer = None;
    let mut it = mats.into_iter();
    for (i, dh) in header.dictionaries.iter().enumerate() {
        let expect = [format!("support[{i}]"), format!("coefficients[{i}]")];
        let mut pair = Vec::with_capacity(2);
        for want in &expect {
            match it.next() {
                Some((name, m)) if name == want => pair.push(m),
                _ => return Err(DataError::format(file, want, "missing section")),
            }
        }
        let coefficients = pair.pop().unwrap();
        let support = pair.pop().unwrap();
        if support.rows() != header.d || support.cols() != dh.support || coefficients.cols() != dh.atoms {
            return Err(DataError::format(file, &expect[0], "shape disagrees with header"));
        }
        let meta = DictionaryMeta { sparsity: dh.k, iterations_run: dh.iterations_run, seed: dh.seed };
        dictionaries.push(Dictionary::new(support, coefficients, kernel, meta)?);
    }
    for (name, m) in it {
        if name != "standardization" || m.rows() != 2 || m.cols() != header.d {
            return Err(DataError::format(file, name, "unexpected section"));
        }
        standardizer = Some(Standardizer {
            means: (0..m.cols()).map(|c| m[(0, c)]).collect(),
            stds: (0..m.cols()).map(|c| m[(1, c)]).collect(),
        });
    }
    if dictionaries.is_empty() {
        return Err(DataError::format(file, "header", "no dictionaries"));
    }
    let model = match (header.kind.as_str(), header.class_ids) {
        ("dictionary", None) if dictionaries.len() == 1 => Model::Dictionary(dictionaries.pop().unwrap()),
        ("classifier", Some(ids)) => Model::Classifier(ClassifierModel::new(dictionaries, ids)?),
        (kind, _) => return Err(DataError::format(file, "header", format!("inconsistent model kind `{kind}`"))),
    };
    Ok(ModelBundle { model, standardizer, config: header.config })
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    fs::write(path, encode_model(bundle)?).map_err(|e| DataError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_model(&bytes, path)
}
