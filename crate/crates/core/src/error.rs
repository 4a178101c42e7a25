use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("length mismatch in {path} for layer {layer_index}: expected {expected} bytes, found {found}")]
    LengthMismatch {
        path: PathBuf,
        layer_index: usize,
        expected: usize,
        found: usize,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),

    #[error("graph too large: {nodes} nodes exceeds the ceiling of {ceiling}")]
    GraphTooLarge { nodes: usize, ceiling: usize },

    #[error("graph has no edges with nonzero weight")]
    EdgelessGraph,

    #[error("eigenvector centrality did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged (non-finite loss) with learning rate {lr}")]
    Diverged { lr: f64 },

    #[error("run {run_id} has {available} epochs but {required} are required")]
    InsufficientEpochs {
        run_id: String,
        available: usize,
        required: usize,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
