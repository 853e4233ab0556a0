use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible distribution: p0_test={p0_test}, p1_test={p1_test}")]
    InfeasibleDistribution { p0_test: f64, p1_test: f64 },

    #[error("pool cannot cover cell (z={source_id}, y={label}): need {needed}, have {available}")]
    InfeasiblePool {
        source_id: u8,
        label: u8,
        needed: usize,
        available: usize,
    },

    #[error("no embedding for document id {0:?}")]
    MissingEmbedding(String),

    #[error("embedding format error: {0}")]
    EmbeddingFormat(String),

    #[error("category {category} out of range for {num_sources} sources")]
    Domain { category: usize, num_sources: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model trained in {actual} mode, {expected} prediction requested")]
    Mode {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
