use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {context}{}", sample.map(|i| format!(" at sample {i}")).unwrap_or_default())]
    NonFinite {
        context: &'static str,
        sample: Option<usize>,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has no latent columns (y, u, r)")]
    MissingLatent,

    #[error("no positive responses to fit a magnitude model")]
    NoPositives,

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("line search found no descent step at lambda {lambda} after {iterations} iterations")]
    LineSearchFailed { lambda: f64, iterations: usize },

    #[error("every grid fit failed: {}", format_failures(.0))]
    AllFitsFailed(Vec<(f64, String)>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite { .. } => "non_finite",
            Error::EmptyDataset => "empty_dataset",
            Error::MissingLatent => "missing_latent",
            Error::NoPositives => "no_positives",
            Error::Linalg(_) => "linalg",
            Error::LineSearchFailed { .. } => "optimizer",
            Error::AllFitsFailed(_) => "all_fits_failed",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "schema",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_failures(failures: &[(f64, String)]) -> String {
    failures
        .iter()
        .map(|(lambda, msg)| format!("lambda={lambda}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
