//! Eight-way classification of (source, target) pairs.
//!
//! Every transfer cell pairs the model (or dataset) that produced an
//! adversarial set with the model asked to classify it. The cell is labelled
//! by which of three training attributes the two sides share: dataset
//! source, architecture, and class balance. C1 is the all-equal white-box
//! diagonal, C8 the fully mismatched corner, and the six cases in between
//! isolate each partial overlap.

use serde::{Deserialize, Serialize};

use crate::data::{SourceId, TaskId};
use crate::error::{Error, Result};
use crate::model::ModelProvenance;

/// Agreement class of a (source, target) pair: the truth table over
/// (source equal, architecture equal, balance equal), enumerated with
/// equality-heavy cases first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairCase {
    /// Same source, same architecture, same balance (white box).
    C1,
    /// Same source, same architecture, different balance.
    C2,
    /// Same source, different architecture, same balance.
    C3,
    /// Same source, different architecture, different balance.
    C4,
    /// Different source, same architecture, same balance.
    C5,
    /// Different source, same architecture, different balance.
    C6,
    /// Different source, different architecture, same balance.
    C7,
    /// Different source, different architecture, different balance (black box).
    C8,
}

impl PairCase {
    pub fn all() -> [PairCase; 8] {
        [
            PairCase::C1,
            PairCase::C2,
            PairCase::C3,
            PairCase::C4,
            PairCase::C5,
            PairCase::C6,
            PairCase::C7,
            PairCase::C8,
        ]
    }

    pub fn from_flags(source_equal: bool, arch_equal: bool, balance_equal: bool) -> PairCase {
        match (source_equal, arch_equal, balance_equal) {
            (true, true, true) => PairCase::C1,
            (true, true, false) => PairCase::C2,
            (true, false, true) => PairCase::C3,
            (true, false, false) => PairCase::C4,
            (false, true, true) => PairCase::C5,
            (false, true, false) => PairCase::C6,
            (false, false, true) => PairCase::C7,
            (false, false, false) => PairCase::C8,
        }
    }

    pub fn source_equal(self) -> bool {
        matches!(self, PairCase::C1 | PairCase::C2 | PairCase::C3 | PairCase::C4)
    }

    pub fn arch_equal(self) -> bool {
        matches!(self, PairCase::C1 | PairCase::C2 | PairCase::C5 | PairCase::C6)
    }

    pub fn balance_equal(self) -> bool {
        matches!(self, PairCase::C1 | PairCase::C3 | PairCase::C5 | PairCase::C7)
    }

    pub fn label(self) -> &'static str {
        match self {
            PairCase::C1 => "C1",
            PairCase::C2 => "C2",
            PairCase::C3 => "C3",
            PairCase::C4 => "C4",
            PairCase::C5 => "C5",
            PairCase::C6 => "C6",
            PairCase::C7 => "C7",
            PairCase::C8 => "C8",
        }
    }
}

impl std::fmt::Display for PairCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PairCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairCase::all()
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown pair case {s:?}")))
    }
}

/// Classifies a pair of trained models. Both must come from the same task;
/// transfer across tasks is undefined and rejected.
pub fn classify_case(src: &ModelProvenance, trg: &ModelProvenance) -> Result<PairCase> {
    if src.task != trg.task {
        return Err(Error::TaskMismatch {
            src: src.task.to_string(),
            trg: trg.task.to_string(),
        });
    }
    Ok(PairCase::from_flags(
        src.source == trg.source,
        src.arch == trg.arch,
        src.balance == trg.balance,
    ))
}

/// Classifies a cell whose source side is a dataset rather than a model, as
/// with image-space corruptions that need no surrogate. Architecture is
/// pinned equal: the reference models used to tune such attacks cover every
/// architecture, so the target's is always among them. The source-side
/// balance is the balanced training distribution of those reference models.
pub fn classify_dataset_case(
    src_task: TaskId,
    src_source: SourceId,
    trg: &ModelProvenance,
) -> Result<PairCase> {
    if src_task != trg.task {
        return Err(Error::TaskMismatch {
            src: src_task.to_string(),
            trg: trg.task.to_string(),
        });
    }
    Ok(PairCase::from_flags(
        src_source == trg.source,
        true,
        trg.balance == crate::data::BalanceLevel::Balanced,
    ))
}
