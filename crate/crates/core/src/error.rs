use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid layer spec: {0}")]
    InvalidLayer(String),

    #[error("loss domain violation: {0}")]
    LossDomain(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr = {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("invalid stage plan: {0}")]
    Plan(String),

    #[error("block {block} missing from {context}")]
    MissingBlock { block: String, context: String },

    #[error("linked block shape mismatch between {target} and {source_block}: {target_shapes:?} vs {source_shapes:?}")]
    LinkedShape {
        target: String,
        source_block: String,
        target_shapes: Vec<Vec<usize>>,
        source_shapes: Vec<Vec<usize>>,
    },

    #[error("frozen parameters of stage {stage} changed while training stage {during}")]
    FrozenMutated { stage: usize, during: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("label out of range: {0}")]
    Label(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("checksum mismatch: expected {expected}, computed {computed}")]
    Checksum { expected: String, computed: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
