//! Aggregations over the result table.
//!
//! Everything here is a pure function of the rows, so any aggregate can be
//! recomputed from a persisted table. Rows without an ASR (infeasible or
//! failed cells) are excluded from every aggregate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::case::PairCase;
use super::matrix::SourceRef;
use super::table::{CellStatus, ExperimentCell};
use crate::attack::{AttackFamily, AttackKind};
use crate::data::{BalanceLevel, SourceId, TaskId};
use crate::error::{Error, Result};

/// Mean ASR of one (task, attack, case) group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseSummary {
    pub task: TaskId,
    pub attack: AttackKind,
    pub case: PairCase,
    pub mean_asr: f64,
    pub cells: usize,
}

/// Mean ASR per case for every attack.
///
/// Gradient-attack rows carry a concrete case. Corruption rows have no
/// meaningful architecture axis (their case always reads arch-equal), so
/// they enter every case that matches on the source and balance flags; the
/// architecture dimension is marginalized and all eight cases get a
/// corruption mean.
pub fn aggregate_by_case(cells: &[ExperimentCell]) -> Vec<CaseSummary> {
    let mut groups: BTreeMap<(TaskId, AttackKind, PairCase), (f64, usize)> = BTreeMap::new();
    for cell in cells {
        let Some(asr) = cell.asr else { continue };
        match cell.family {
            AttackFamily::Mathematical => {
                let slot = groups.entry((cell.task, cell.attack, cell.case)).or_default();
                slot.0 += asr;
                slot.1 += 1;
            }
            AttackFamily::NonMathematical => {
                for case in PairCase::all() {
                    if case.source_equal() == cell.case.source_equal()
                        && case.balance_equal() == cell.case.balance_equal()
                    {
                        let slot = groups.entry((cell.task, cell.attack, case)).or_default();
                        slot.0 += asr;
                        slot.1 += 1;
                    }
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|((task, attack, case), (sum, n))| CaseSummary {
            task,
            attack,
            case,
            mean_asr: sum / n as f64,
            cells: n,
        })
        .collect()
}

/// Head-to-head record of the two attack families in one case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyWins {
    pub task: TaskId,
    pub case: PairCase,
    /// Number of (gradient, corruption) attack pairs compared.
    pub comparisons: usize,
    /// Pairs in which the corruption's mean ASR was strictly higher.
    pub non_math_wins: usize,
}

/// Compares every gradient attack against every corruption per (task, case),
/// counting strict corruption wins on the case means.
pub fn compare_families(cells: &[ExperimentCell]) -> Vec<FamilyWins> {
    let summaries = aggregate_by_case(cells);
    let mut means: BTreeMap<(TaskId, AttackKind, PairCase), f64> = BTreeMap::new();
    let mut tasks: Vec<TaskId> = Vec::new();
    let mut math: Vec<AttackKind> = Vec::new();
    let mut corruption: Vec<AttackKind> = Vec::new();
    for s in &summaries {
        means.insert((s.task, s.attack, s.case), s.mean_asr);
        if !tasks.contains(&s.task) {
            tasks.push(s.task);
        }
        let family_list = match s.attack.family() {
            AttackFamily::Mathematical => &mut math,
            AttackFamily::NonMathematical => &mut corruption,
        };
        if !family_list.contains(&s.attack) {
            family_list.push(s.attack);
        }
    }
    tasks.sort();
    math.sort();
    corruption.sort();

    let mut out = Vec::new();
    for &task in &tasks {
        for case in PairCase::all() {
            let mut comparisons = 0;
            let mut wins = 0;
            for &m in &math {
                for &c in &corruption {
                    let (Some(&mm), Some(&cm)) = (
                        means.get(&(task, m, case)),
                        means.get(&(task, c, case)),
                    ) else {
                        continue;
                    };
                    comparisons += 1;
                    if cm > mm {
                        wins += 1;
                    }
                }
            }
            out.push(FamilyWins {
                task,
                case,
                comparisons,
                non_math_wins: wins,
            });
        }
    }
    out
}

/// Pooled per-class flip rates over the (source balance, target balance)
/// grid, gradient attacks only. Class 0 is the designated minority class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassMatrices {
    pub balances: [BalanceLevel; 4],
    pub minority: [[Option<f64>; 4]; 4],
    pub majority: [[Option<f64>; 4]; 4],
    pub combined: [[Option<f64>; 4]; 4],
    pub minority_n: [[usize; 4]; 4],
    pub majority_n: [[usize; 4]; 4],
}

/// Per-class success-rate matrices for one task, pooled per sample across
/// every gradient attack and source/target pair with the given balances.
/// Pooling (rather than averaging cell means) keeps the identity
/// `combined = weighted mean of the two class rates` exact.
pub fn asr_by_class(cells: &[ExperimentCell], task: TaskId) -> ClassMatrices {
    let balances = BalanceLevel::all();
    let index = |b: BalanceLevel| balances.iter().position(|x| *x == b).expect("4 levels");

    let mut flips = [[[0usize; 2]; 4]; 4];
    let mut totals = [[[0usize; 2]; 4]; 4];
    for cell in cells {
        if cell.task != task
            || cell.family != AttackFamily::Mathematical
            || cell.status != CellStatus::Ok
        {
            continue;
        }
        let SourceRef::Model(src) = &cell.src else { continue };
        let (i, j) = (index(src.balance), index(cell.trg.balance));
        for (&class, &flip) in cell.classes.iter().zip(&cell.flips) {
            let c = usize::from(class != 0);
            totals[i][j][c] += 1;
            flips[i][j][c] += usize::from(flip);
        }
    }

    let mut out = ClassMatrices {
        balances,
        minority: [[None; 4]; 4],
        majority: [[None; 4]; 4],
        combined: [[None; 4]; 4],
        minority_n: [[0; 4]; 4],
        majority_n: [[0; 4]; 4],
    };
    for i in 0..4 {
        for j in 0..4 {
            let [min_n, maj_n] = [totals[i][j][0], totals[i][j][1]];
            out.minority_n[i][j] = min_n;
            out.majority_n[i][j] = maj_n;
            if min_n > 0 {
                out.minority[i][j] = Some(flips[i][j][0] as f64 / min_n as f64);
            }
            if maj_n > 0 {
                out.majority[i][j] = Some(flips[i][j][1] as f64 / maj_n as f64);
            }
            if min_n + maj_n > 0 {
                out.combined[i][j] =
                    Some((flips[i][j][0] + flips[i][j][1]) as f64 / (min_n + maj_n) as f64);
            }
        }
    }
    out
}

/// ASR values of source-mismatched gradient cells at one target balance,
/// split by transfer direction, with histogram bins for plotting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MismatchSplit {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
    /// `bins + 1` edges spanning [0, 1].
    pub bin_edges: Vec<f64>,
    pub a_counts: Vec<usize>,
    pub b_counts: Vec<usize>,
}

/// Collects the two direction-wise ASR distributions for cells whose source
/// and target datasets differ, restricted to one task and target balance.
pub fn mismatch_distributions(
    cells: &[ExperimentCell],
    task: TaskId,
    target_balance: BalanceLevel,
    bins: usize,
) -> Result<MismatchSplit> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".to_string()));
    }
    let mut a_to_b = Vec::new();
    let mut b_to_a = Vec::new();
    for cell in cells {
        if cell.task != task
            || cell.family != AttackFamily::Mathematical
            || cell.trg.balance != target_balance
            || cell.src.source() == cell.trg.source
        {
            continue;
        }
        let Some(asr) = cell.asr else { continue };
        match cell.src.source() {
            SourceId::A => a_to_b.push(asr),
            SourceId::B => b_to_a.push(asr),
        }
    }

    let histogram = |values: &[f64]| {
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        counts
    };
    Ok(MismatchSplit {
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        a_counts: histogram(&a_to_b),
        b_counts: histogram(&b_to_a),
        a_to_b,
        b_to_a,
    })
}
