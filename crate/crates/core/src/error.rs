use thiserror::Error;

/// Unified error type for the benchmark pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received tensors whose shapes do not fit together.
    #[error("shape-error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Backpropagation was requested from a node that is not a scalar.
    #[error("non-scalar-loss: backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// A file could not be read or decoded during folder ingestion.
    #[error("ingest-error: {path}: {detail}")]
    Ingest { path: String, detail: String },

    /// A class directory or class partition contained no usable samples.
    #[error("empty-class: {0}")]
    EmptyClass(String),

    /// Split ratios or per-class counts cannot produce a valid partition.
    #[error("split-error: {0}")]
    Split(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training-diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    /// An evaluation was attempted on an empty sample collection.
    #[error("empty-eval: {0}")]
    EmptyEval(String),

    /// Inputs to an evaluation are inconsistent with each other.
    #[error("eval-error: {0}")]
    Eval(String),

    /// The model collection handed to the harness is not a full grid.
    #[error("matrix-error: {0}")]
    Matrix(String),

    /// A source and target model were paired across different tasks.
    #[error("task-mismatch: source trained on {src}, target trained on {trg}")]
    TaskMismatch { src: String, trg: String },

    /// Too few correctly classified samples to draw an evaluation set.
    #[error("eval-pool-exhausted: class {class} has {available} correct samples, {needed} required")]
    EvalPoolExhausted {
        class: String,
        needed: usize,
        available: usize,
    },

    /// A checkpoint file is malformed or does not round-trip.
    #[error("checkpoint-error: {0}")]
    Checkpoint(String),

    /// A registry index is missing an entry or is inconsistent on disk.
    #[error("registry-error: {0}")]
    Registry(String),

    /// A run configuration is invalid or conflicts with an existing run.
    #[error("config-error: {0}")]
    Config(String),

    #[error("io-error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json-error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
