use std::path::PathBuf;

use setmatch_tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("dataset {0} contains no incidences")]
    EmptyDataset(PathBuf),
    #[error("filters removed every incidence")]
    EmptyResult,
    #[error("invalid hyperedge: {0}")]
    InvalidHyperedge(String),
    #[error("invalid filter spec: {0}")]
    InvalidFilter(String),
    #[error("refusing to enumerate {pairs} potential pairs (cap {cap})")]
    CapExceeded { pairs: u128, cap: u128 },
    #[error("infeasible sampling: {0}")]
    InfeasibleSampling(String),
    #[error("retry budget of {attempts} attempts exhausted {context}")]
    BudgetExhausted { attempts: u64, context: String },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("AUC is undefined: {0}")]
    UndefinedMetric(String),
    #[error("model integrity: {0}")]
    ModelIntegrity(String),
    #[error("embedding table does not cover {0}")]
    MissingEmbedding(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::EmptyResult => "empty_result",
            Error::InvalidHyperedge(_) => "invalid_hyperedge",
            Error::InvalidFilter(_) => "invalid_filter",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::InfeasibleSampling(_) => "infeasible_sampling",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::InvalidSplit(_) => "invalid_split",
            Error::InvalidConfig(_) => "invalid_config",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::ModelIntegrity(_) => "model_integrity",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::Tensor(_) => "tensor",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
