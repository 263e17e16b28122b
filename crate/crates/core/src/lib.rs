//! Core library for a desk-scale adversarial-transferability benchmark.
//!
//! The crate trains a matrix of small CNN classifiers over synthetic binary
//! image tasks, generates adversarial examples with thirteen evasion attacks,
//! tunes each attack under a mean-SSIM constraint, and sweeps every
//! (source, target) model pair to measure how attack success transfers when
//! the dataset source, the model architecture, and the class balance differ.

pub mod attack;
pub mod data;
pub mod diff;
pub mod error;
pub mod harness;
pub mod model;
pub mod perceptual;
pub mod rng;
pub mod tuning;

pub use attack::{AttackFamily, AttackHyper, AttackKind, AttackSpec, ParamGrid};
pub use data::{BalanceLevel, DatasetSplit, Sample, SourceId, TaskId, TaskSpec};
pub use diff::{Network, Parameters, Tape, Tensor};
pub use error::{Error, Result};
pub use harness::{
    ExperimentCell, ExperimentConfig, GridAxes, PairCase, ResultTable, RunOutput, SourceRef,
};
pub use model::{ArchId, Metrics, ModelProvenance, ModelRecord, ModelRegistry};
pub use tuning::{TracePoint, TuningConfig, TuningResult};
