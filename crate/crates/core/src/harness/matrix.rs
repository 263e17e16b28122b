//! Enumeration of the full transfer matrix.
//!
//! For one task the model grid is 2 sources x 4 balance levels x 3
//! architectures = 24 models. Gradient-based attacks pair every model with
//! every model (576 ordered cells per attack); image-space corruptions are
//! generated once per source dataset and shown to all 24 targets (48 cells
//! per attack).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::case::{classify_case, classify_dataset_case, PairCase};
use crate::attack::{AttackFamily, AttackKind};
use crate::data::{BalanceLevel, SourceId, TaskId};
use crate::error::{Error, Result};
use crate::model::{ArchId, ModelProvenance};

/// What produced an adversarial set: a surrogate model for gradient attacks,
/// or a source dataset for model-free corruptions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceRef {
    Model(ModelProvenance),
    Dataset { task: TaskId, source: SourceId },
}

impl SourceRef {
    pub fn id(&self) -> String {
        match self {
            SourceRef::Model(p) => p.id(),
            SourceRef::Dataset { task, source } => format!("{task}-{source}"),
        }
    }

    pub fn task(&self) -> TaskId {
        match self {
            SourceRef::Model(p) => p.task,
            SourceRef::Dataset { task, .. } => *task,
        }
    }

    pub fn source(&self) -> SourceId {
        match self {
            SourceRef::Model(p) => p.source,
            SourceRef::Dataset { source, .. } => *source,
        }
    }

    /// Source-side balance level: the trained surrogate's for model sources,
    /// the balanced reference distribution for dataset sources.
    pub fn balance(&self) -> BalanceLevel {
        match self {
            SourceRef::Model(p) => p.balance,
            SourceRef::Dataset { .. } => BalanceLevel::Balanced,
        }
    }
}

/// One not-yet-run cell of the transfer matrix.
#[derive(Clone, Debug)]
pub struct PendingCell {
    pub task: TaskId,
    pub attack: AttackKind,
    pub src: SourceRef,
    pub trg: ModelProvenance,
    pub case: PairCase,
}

/// The slice of the model grid a run covers. Defaults to the full
/// 2 x 4 x 3 grid; reduced axes support quick smoke runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxes {
    pub sources: Vec<SourceId>,
    pub balances: Vec<BalanceLevel>,
    pub archs: Vec<ArchId>,
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            sources: SourceId::all().to_vec(),
            balances: BalanceLevel::all().to_vec(),
            archs: ArchId::all().to_vec(),
        }
    }
}

impl GridAxes {
    pub fn validate(&self) -> Result<()> {
        fn distinct<T: Ord + Copy>(xs: &[T], what: &str) -> Result<()> {
            if xs.is_empty() {
                return Err(Error::Config(format!("grid needs at least one {what}")));
            }
            let set: std::collections::BTreeSet<T> = xs.iter().copied().collect();
            if set.len() != xs.len() {
                return Err(Error::Config(format!("duplicate {what} in grid axes")));
            }
            Ok(())
        }
        distinct(&self.sources, "source")?;
        distinct(&self.balances, "balance level")?;
        distinct(&self.archs, "architecture")
    }

    pub fn model_count(&self) -> usize {
        self.sources.len() * self.balances.len() * self.archs.len()
    }

    /// Provenance records for every grid slot of one task, sorted by id.
    pub fn provenances(&self, task: TaskId, seed: u64) -> Vec<ModelProvenance> {
        let mut provs = Vec::new();
        for &source in &self.sources {
            for &balance in &self.balances {
                for &arch in &self.archs {
                    provs.push(ModelProvenance {
                        task,
                        source,
                        balance,
                        arch,
                        seed,
                    });
                }
            }
        }
        provs.sort_by_key(|p| p.id());
        provs
    }
}

/// Enumerates every cell for one task over the full model grid, in
/// (attack, source, target) order with sources and targets sorted by id.
///
/// `models` must be exactly the 24-model grid for `task`: every
/// (source, balance, architecture) combination once. Anything else is a
/// malformed registry and is rejected.
pub fn build_matrix(
    task: TaskId,
    models: &[ModelProvenance],
    attacks: &[AttackKind],
) -> Result<Vec<PendingCell>> {
    build_matrix_with(task, models, attacks, &GridAxes::default())
}

/// [`build_matrix`] over a reduced grid: `models` must cover exactly the
/// combinations spanned by `axes`.
pub fn build_matrix_with(
    task: TaskId,
    models: &[ModelProvenance],
    attacks: &[AttackKind],
    axes: &GridAxes,
) -> Result<Vec<PendingCell>> {
    axes.validate()?;
    let expected = axes.model_count();
    if models.len() != expected {
        return Err(Error::Matrix(format!(
            "task {task} has {} models, the configured grid needs {expected}",
            models.len()
        )));
    }
    let mut seen = BTreeMap::new();
    for prov in models {
        if prov.task != task {
            return Err(Error::Matrix(format!(
                "model {} does not belong to task {task}",
                prov.id()
            )));
        }
        if seen.insert(prov.id(), prov.clone()).is_some() {
            return Err(Error::Matrix(format!("duplicate model {}", prov.id())));
        }
    }
    // Distinct ids over the right task imply full coverage only if every
    // combination is present; check explicitly so a duplicate-free but
    // lopsided collection is still caught.
    for &source in &axes.sources {
        for &balance in &axes.balances {
            for &arch in &axes.archs {
                let id = format!("{task}-{source}-{balance}-{arch}");
                if !seen.contains_key(&id) {
                    return Err(Error::Matrix(format!("missing model {id}")));
                }
            }
        }
    }

    let targets: Vec<&ModelProvenance> = seen.values().collect();
    let mut cells = Vec::new();
    for &attack in attacks {
        match attack.family() {
            AttackFamily::Mathematical => {
                for src in &targets {
                    for trg in &targets {
                        cells.push(PendingCell {
                            task,
                            attack,
                            src: SourceRef::Model((*src).clone()),
                            trg: (*trg).clone(),
                            case: classify_case(src, trg)?,
                        });
                    }
                }
            }
            AttackFamily::NonMathematical => {
                for &source in &axes.sources {
                    for trg in &targets {
                        cells.push(PendingCell {
                            task,
                            attack,
                            src: SourceRef::Dataset { task, source },
                            trg: (*trg).clone(),
                            case: classify_dataset_case(task, source, trg)?,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Cell counts per case for one attack on one task's full grid.
pub fn case_census(family: AttackFamily) -> BTreeMap<PairCase, usize> {
    let counts: [(PairCase, usize); 8] = match family {
        AttackFamily::Mathematical => [
            (PairCase::C1, 24),
            (PairCase::C2, 72),
            (PairCase::C3, 48),
            (PairCase::C4, 144),
            (PairCase::C5, 24),
            (PairCase::C6, 72),
            (PairCase::C7, 48),
            (PairCase::C8, 144),
        ],
        AttackFamily::NonMathematical => [
            (PairCase::C1, 6),
            (PairCase::C2, 18),
            (PairCase::C3, 0),
            (PairCase::C4, 0),
            (PairCase::C5, 6),
            (PairCase::C6, 18),
            (PairCase::C7, 0),
            (PairCase::C8, 0),
        ],
    };
    counts.into_iter().filter(|(_, n)| *n > 0).collect()
}

/// The full 24-model provenance grid for one task, sorted by id.
pub fn full_grid(task: TaskId, seed: u64) -> Vec<ModelProvenance> {
    GridAxes::default().provenances(task, seed)
}
