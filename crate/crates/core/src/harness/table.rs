//! Result rows and their on-disk forms.
//!
//! Each evaluated cell becomes one row. The compact CSV keeps one line per
//! cell for plotting and diffing; the JSON form carries everything needed to
//! re-derive any aggregate, including per-sample flip outcomes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::case::PairCase;
use super::matrix::SourceRef;
use crate::attack::{AttackFamily, AttackKind};
use crate::data::TaskId;
use crate::error::Result;
use crate::model::ModelProvenance;
use crate::tuning::TuningResult;

/// Outcome of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    /// Attack ran and the target was evaluated.
    Ok,
    /// No attack parameter met the perceptual floor on the source side, so
    /// no adversarial set exists for this source.
    ConstraintInfeasible,
    /// The cell failed; `detail` explains why.
    Error,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::ConstraintInfeasible => "constraint-infeasible",
            CellStatus::Error => "error",
        }
    }
}

/// One evaluated (attack, source, target) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub task: TaskId,
    pub attack: AttackKind,
    pub family: AttackFamily,
    pub src: SourceRef,
    pub trg: ModelProvenance,
    pub case: PairCase,
    pub status: CellStatus,
    /// Fraction of the evaluation set the target misclassifies after the
    /// attack; absent when the cell carries no result.
    pub asr: Option<f64>,
    /// Evaluation-set size the cell was meant to run on.
    pub n: usize,
    /// Tuned attack parameter, absent for parameter-free attacks and
    /// non-ok cells.
    pub gamma: Option<f64>,
    /// Seed the adversarial set was generated with.
    pub seed: u64,
    /// Human-readable reason for a non-ok status.
    pub detail: Option<String>,
    /// True class per evaluation sample (index-aligned with `flips`).
    pub classes: Vec<u8>,
    /// Whether the target misclassified each attacked sample.
    pub flips: Vec<bool>,
}

/// Run-level context persisted alongside the rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub n_eval: usize,
    pub alpha: f64,
    /// Unix timestamp of assembly; informational only and deliberately kept
    /// out of the CSV so reruns stay byte-identical.
    pub created_unix: u64,
}

/// Attack tuning outcome for one (task, attack, source) work unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuningRecord {
    pub task: TaskId,
    pub attack: AttackKind,
    pub src: String,
    pub result: TuningResult,
}

/// All rows of a run plus its metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultTable {
    pub metadata: RunMetadata,
    pub cells: Vec<ExperimentCell>,
}

pub(crate) const CSV_HEADER: &str = "task,attack,family,src,trg,case,asr,n,gamma,seed,status";

fn opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl ResultTable {
    /// Compact CSV: a config-hash comment, a header, one line per cell,
    /// sorted so the byte stream is independent of execution order.
    pub fn csv_string(&self) -> String {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_by_key(|&i| {
            let c = &self.cells[i];
            (c.task, c.attack, c.src.id(), c.trg.id())
        });
        let mut out = format!("# config_hash={}\n{CSV_HEADER}\n", self.metadata.config_hash);
        for i in order {
            let c = &self.cells[i];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.task,
                c.attack.name(),
                c.family.as_str(),
                c.src.id(),
                c.trg.id(),
                c.case,
                opt(c.asr),
                c.n,
                opt(c.gamma),
                c.seed,
                c.status.as_str(),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv_string())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<ResultTable> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
