//! Transfer-matrix experiment harness.
//!
//! Ties the pipeline together: enumerate every (attack, source, target)
//! cell over the trained model grid, tune each attack once per source under
//! the perceptual constraint, evaluate the resulting adversarial sets on
//! all targets, and reduce the rows to case means, family comparisons,
//! per-class matrices, and direction-wise distribution tests.

mod aggregate;
mod case;
mod ks;
mod matrix;
mod report;
mod run;
mod select;
mod table;

pub use aggregate::{
    aggregate_by_case, asr_by_class, compare_families, mismatch_distributions, CaseSummary,
    ClassMatrices, FamilyWins, MismatchSplit,
};
pub use case::{classify_case, classify_dataset_case, PairCase};
pub use ks::{ks_test, KsResult};
pub use matrix::{build_matrix, build_matrix_with, case_census, full_grid, GridAxes, PendingCell, SourceRef};
pub use report::{write_figure_bundle, write_run_artifacts};
pub use run::{run_experiment, run_experiment_with, tune_attacks, ExperimentConfig, Progress, RunOutput};
pub use select::{select_eval_set, EvalSet};
pub use table::{CellStatus, ExperimentCell, ResultTable, RunMetadata, TuningRecord};
