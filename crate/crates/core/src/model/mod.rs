//! Classifier architectures, training, evaluation metrics, and the on-disk
//! model registry.

mod arch;
mod metrics;
mod registry;
mod train;

pub use arch::ArchId;
pub use metrics::{f1_score, Metrics};
pub use registry::{ModelRegistry, RegistryEntry};
pub use train::{
    evaluate, evaluate_baseline, predict, train, ModelProvenance, ModelRecord, TrainingConfig,
};
