use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{file} section `{section}`: {message}")]
    Format { file: String, section: String, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("model header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] nnk_core::Error),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn csv(line: usize, message: String) -> Self {
        DataError::Csv { line, message }
    }

    pub(crate) fn format(file: &Path, section: &str, message: impl Into<String>) -> Self {
        DataError::Format { file: file.display().to_string(), section: section.into(), message: message.into() }
    }

    /// True for failures raised by the numerical core rather than by the input.
    pub fn is_numerical(&self) -> bool {
        use nnk_core::Error as E;
        fn numeric(e: &E) -> bool {
            match e {
                E::Singular | E::NnlsMaxIter { .. } | E::NotSymmetric => true,
                E::Sample { source, .. } | E::Iteration { source, .. } => numeric(source),
                _ => false,
            }
        }
        matches!(self, DataError::Core(e) if numeric(e))
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
