//! The experiment runner.
//!
//! Work is grouped into units of one (task, attack, source): the attack is
//! tuned once against the source side, the adversarial set is generated once
//! at the tuned parameter, and every target model of the task classifies the
//! same set. Units are independent, so they run in parallel and are cached
//! on disk one file per unit, which makes an interrupted run resumable.
//!
//! A failure inside a unit (exhausted evaluation pool, attack error) is
//! recorded in that unit's rows rather than aborting the run; only malformed
//! inputs, a config mismatch against an existing cache, or I/O trouble stop
//! the whole experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::{build_matrix_with, GridAxes, PendingCell, SourceRef};
use super::select::{select_from_mask, EvalSet};
use super::table::{
    CellStatus, ExperimentCell, ResultTable, RunMetadata, TuningRecord,
};
use crate::attack::{run_attack, AttackFamily, AttackKind, AttackSpec};
use crate::data::{BalanceLevel, Sample, SourceId, TaskId};
use crate::diff::{argmax_row, Network};
use crate::error::{Error, Result};
use crate::model::{predict, ArchId, ModelRecord};
use crate::perceptual::SsimConfig;
use crate::rng::derive_seed;
use crate::tuning::{tune, TuningConfig, TuningResult};

/// Everything that defines a run's outcome. Hashing this (via its JSON form)
/// keys the on-disk cache: a unit computed under one config is never reused
/// under another.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub attacks: Vec<AttackSpec>,
    /// Evaluation-set size per source; also the tuning-set size.
    pub n_eval: usize,
    /// Mean-SSIM floor for attack tuning.
    pub alpha: f64,
    pub ssim: SsimConfig,
    pub seed: u64,
    /// Which grid slice to run; the full grid unless narrowed.
    #[serde(default)]
    pub axes: GridAxes,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(Error::Config("no attacks configured".to_string()));
        }
        let mut kinds: Vec<AttackKind> = self.attacks.iter().map(|s| s.kind).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.attacks.len() {
            return Err(Error::Config("duplicate attack in configuration".to_string()));
        }
        if self.n_eval == 0 || self.n_eval % 2 != 0 {
            return Err(Error::Config(format!(
                "n_eval must be a positive even number, got {}",
                self.n_eval
            )));
        }
        self.axes.validate()?;
        let needs_balanced = self
            .attacks
            .iter()
            .any(|s| s.kind.family() == AttackFamily::NonMathematical);
        if needs_balanced && !self.axes.balances.contains(&BalanceLevel::Balanced) {
            return Err(Error::Config(
                "image-space corruptions are tuned against the balanced models; \
                 include the balanced level in the grid axes"
                    .to_string(),
            ));
        }
        self.tuning_config().validate()
    }

    pub fn tuning_config(&self) -> TuningConfig {
        TuningConfig {
            alpha: self.alpha,
            n_tune: self.n_eval,
            ssim: self.ssim.clone(),
        }
    }

    /// Hex digest of the full configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A finished run: the row table plus one tuning record per work unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub table: ResultTable,
    pub tunings: Vec<TuningRecord>,
}

/// Progress callback: (units done, units total, key of the finished unit).
pub type Progress<'a> = &'a (dyn Fn(usize, usize, &str) + Sync);

struct WorkUnit<'a> {
    task: TaskId,
    spec: &'a AttackSpec,
    src: SourceRef,
    pending: Vec<PendingCell>,
}

impl WorkUnit<'_> {
    fn key(&self) -> String {
        format!("{}--{}--{}", self.task, self.spec.kind.name(), self.src.id())
    }
}

struct RunContext<'a> {
    nets: BTreeMap<String, &'a Network<f32>>,
    pools: &'a BTreeMap<(TaskId, SourceId), Vec<Sample>>,
    /// Per model id: which samples of its own source's test pool it labels
    /// correctly. Computed once so units need no repeated forward passes.
    masks: BTreeMap<String, Vec<bool>>,
    /// Architectures whose balanced models referee corruption tuning.
    archs: &'a [ArchId],
    /// Tuning results carried over from an earlier tuning stage, keyed by
    /// (task, attack, source id). Units not found here are tuned inline.
    pretuned: BTreeMap<(TaskId, AttackKind, String), &'a TuningResult>,
    tuning: TuningConfig,
    seed: u64,
    n_eval: usize,
}

#[derive(Serialize, Deserialize)]
struct CachedUnit {
    key: String,
    config_hash: String,
    cells: Vec<ExperimentCell>,
    tuning: Option<TuningRecord>,
}

/// Runs the full transfer matrix over the given trained models.
///
/// `tests` maps each (task, source) to that dataset's held-out test split,
/// which is shared by all balance levels of the source. When `out_dir` is
/// set, finished units are written to `<out_dir>/units/` and picked up again
/// on the next invocation with the same configuration; a differing
/// configuration against an existing cache is refused.
pub fn run_experiment(
    models: &[ModelRecord],
    tests: &BTreeMap<(TaskId, SourceId), Vec<Sample>>,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    progress: Option<Progress<'_>>,
) -> Result<RunOutput> {
    run_experiment_with(models, tests, cfg, out_dir, &[], progress)
}

/// [`run_experiment`], reusing tuning records from an earlier tuning stage.
/// A unit whose record is missing is tuned inline; the records must come
/// from the same configuration or the white-box diagonal will not reproduce
/// the recorded tuning success rates.
pub fn run_experiment_with(
    models: &[ModelRecord],
    tests: &BTreeMap<(TaskId, SourceId), Vec<Sample>>,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    pretuned: &[TuningRecord],
    progress: Option<Progress<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let (units, ctx) = prepare(models, tests, cfg, pretuned)?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("units"))?;
    }

    let total = units.len();
    let done = AtomicUsize::new(0);
    let outputs: Vec<(Vec<ExperimentCell>, Option<TuningRecord>)> = units
        .par_iter()
        .map(|unit| -> Result<(Vec<ExperimentCell>, Option<TuningRecord>)> {
            let key = unit.key();
            let out = match out_dir {
                Some(dir) => {
                    let path = unit_path(dir, &key);
                    match load_cached(&path, unit, &hash)? {
                        Some(cached) => cached,
                        None => {
                            let fresh = run_unit(unit, &ctx);
                            store_cached(&path, &key, &hash, &fresh)?;
                            fresh
                        }
                    }
                }
                None => run_unit(unit, &ctx),
            };
            if let Some(report) = progress {
                report(done.fetch_add(1, Ordering::Relaxed) + 1, total, &key);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut tunings = Vec::new();
    for (unit_cells, tuning) in outputs {
        cells.extend(unit_cells);
        tunings.extend(tuning);
    }

    Ok(RunOutput {
        table: ResultTable {
            metadata: RunMetadata {
                seed: cfg.seed,
                config_hash: hash,
                n_eval: cfg.n_eval,
                alpha: cfg.alpha,
                created_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
            cells,
        },
        tunings,
    })
}

/// Tunes every (task, attack, source) unit without scoring any targets.
/// Units that fail (for example an exhausted evaluation pool) are skipped
/// after reporting the failure through `progress`; the matrix run will hit
/// and record the same failure per cell.
pub fn tune_attacks(
    models: &[ModelRecord],
    tests: &BTreeMap<(TaskId, SourceId), Vec<Sample>>,
    cfg: &ExperimentConfig,
    progress: Option<Progress<'_>>,
) -> Result<Vec<TuningRecord>> {
    cfg.validate()?;
    let (units, ctx) = prepare(models, tests, cfg, &[])?;
    let total = units.len();
    let done = AtomicUsize::new(0);
    let records: Vec<Option<TuningRecord>> = units
        .par_iter()
        .map(|unit| {
            let (record, note) = match unit_tuning(unit, &ctx) {
                Ok((_, _, result)) => (
                    Some(TuningRecord {
                        task: unit.task,
                        attack: unit.spec.kind,
                        src: unit.src.id(),
                        result,
                    }),
                    unit.key(),
                ),
                Err(e) => (None, format!("{} failed: {e}", unit.key())),
            };
            if let Some(report) = progress {
                report(done.fetch_add(1, Ordering::Relaxed) + 1, total, &note);
            }
            record
        })
        .collect();
    Ok(records.into_iter().flatten().collect())
}

/// Validates the model collection against the configured grid, plans the
/// matrix, and precomputes per-model correctness masks.
fn prepare<'a>(
    models: &'a [ModelRecord],
    tests: &'a BTreeMap<(TaskId, SourceId), Vec<Sample>>,
    cfg: &'a ExperimentConfig,
    pretuned: &'a [TuningRecord],
) -> Result<(Vec<WorkUnit<'a>>, RunContext<'a>)> {
    let kinds: Vec<AttackKind> = cfg.attacks.iter().map(|s| s.kind).collect();
    let specs: BTreeMap<AttackKind, &AttackSpec> =
        cfg.attacks.iter().map(|s| (s.kind, s)).collect();

    let mut nets = BTreeMap::new();
    let mut by_task: BTreeMap<TaskId, Vec<_>> = BTreeMap::new();
    for record in models {
        let id = record.provenance.id();
        if nets.insert(id.clone(), &record.network).is_some() {
            return Err(Error::Matrix(format!("model {id} appears twice")));
        }
        by_task
            .entry(record.provenance.task)
            .or_default()
            .push(record.provenance.clone());
    }

    let mut pending = Vec::new();
    for (task, provs) in &by_task {
        pending.extend(build_matrix_with(*task, provs, &kinds, &cfg.axes)?);
    }

    // One correctness mask per model over its own source's test pool.
    let mut masks = BTreeMap::new();
    for record in models {
        let prov = &record.provenance;
        let pool = tests.get(&(prov.task, prov.source)).ok_or_else(|| {
            Error::Config(format!(
                "no test samples for task {} source {}",
                prov.task, prov.source
            ))
        })?;
        let preds = predict(&record.network, pool)?;
        let mask: Vec<bool> = preds
            .iter()
            .zip(pool)
            .map(|(p, s)| *p == s.label)
            .collect();
        masks.insert(prov.id(), mask);
    }

    let ctx = RunContext {
        nets,
        pools: tests,
        masks,
        archs: &cfg.axes.archs,
        pretuned: pretuned
            .iter()
            .map(|r| ((r.task, r.attack, r.src.clone()), &r.result))
            .collect(),
        tuning: cfg.tuning_config(),
        seed: cfg.seed,
        n_eval: cfg.n_eval,
    };

    // Group the pending cells into per-source units, preserving order.
    let mut units: Vec<WorkUnit<'a>> = Vec::new();
    for cell in pending {
        let fresh = match units.last() {
            Some(u) => {
                u.task != cell.task || u.spec.kind != cell.attack || u.src != cell.src
            }
            None => true,
        };
        if fresh {
            units.push(WorkUnit {
                task: cell.task,
                spec: specs[&cell.attack],
                src: cell.src.clone(),
                pending: Vec::new(),
            });
        }
        units.last_mut().expect("just pushed").pending.push(cell);
    }

    Ok((units, ctx))
}

fn unit_path(dir: &Path, key: &str) -> PathBuf {
    dir.join("units").join(format!("{key}.json"))
}

fn load_cached(
    path: &Path,
    unit: &WorkUnit<'_>,
    hash: &str,
) -> Result<Option<(Vec<ExperimentCell>, Option<TuningRecord>)>> {
    if !path.exists() {
        return Ok(None);
    }
    let cached: CachedUnit = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if cached.config_hash != hash {
        return Err(Error::Config(format!(
            "{} was produced by a different configuration; use a fresh output directory",
            path.display()
        )));
    }
    let matches = cached.key == unit.key()
        && cached.cells.len() == unit.pending.len()
        && cached
            .cells
            .iter()
            .zip(&unit.pending)
            .all(|(c, p)| c.trg.id() == p.trg.id() && c.attack == p.attack);
    if !matches {
        return Err(Error::Config(format!(
            "{} does not match the planned matrix; delete it to recompute",
            path.display()
        )));
    }
    Ok(Some((cached.cells, cached.tuning)))
}

fn store_cached(
    path: &Path,
    key: &str,
    hash: &str,
    out: &(Vec<ExperimentCell>, Option<TuningRecord>),
) -> Result<()> {
    let cached = CachedUnit {
        key: key.to_string(),
        config_hash: hash.to_string(),
        cells: out.0.clone(),
        tuning: out.1.clone(),
    };
    std::fs::write(path, serde_json::to_string(&cached)?)?;
    Ok(())
}

/// Runs one unit end to end, converting any failure into error rows.
fn run_unit(
    unit: &WorkUnit<'_>,
    ctx: &RunContext<'_>,
) -> (Vec<ExperimentCell>, Option<TuningRecord>) {
    match run_unit_inner(unit, ctx) {
        Ok(out) => out,
        Err(e) => (error_rows(unit, ctx, &e.to_string()), None),
    }
}

/// The tuning front half of a unit: pick the evaluation set against the
/// unit's reference models and tune the attack on it, unless a carried-over
/// record already covers this unit.
fn unit_tuning(
    unit: &WorkUnit<'_>,
    ctx: &RunContext<'_>,
) -> Result<(EvalSet, u64, TuningResult)> {
    let task = unit.task;
    let source = unit.src.source();
    let pool = ctx
        .pools
        .get(&(task, source))
        .ok_or_else(|| Error::Config(format!("no test samples for task {task} source {source}")))?;

    // Gradient attacks are tuned against their single surrogate; model-free
    // corruptions against the source's balanced models, one per architecture.
    let reference_ids: Vec<String> = match &unit.src {
        SourceRef::Model(prov) => vec![prov.id()],
        SourceRef::Dataset { .. } => {
            let mut ids: Vec<String> = ctx
                .archs
                .iter()
                .map(|arch| format!("{task}-{source}-balanced-{arch}"))
                .collect();
            ids.sort();
            ids
        }
    };
    let mut correct = vec![true; pool.len()];
    let mut surrogates = Vec::with_capacity(reference_ids.len());
    for id in &reference_ids {
        let mask = ctx
            .masks
            .get(id)
            .ok_or_else(|| Error::Matrix(format!("no trained model {id}")))?;
        for (flag, ok) in correct.iter_mut().zip(mask) {
            *flag &= *ok;
        }
        surrogates.push(*ctx.nets.get(id).expect("mask implies net"));
    }

    let eval = select_from_mask(
        &correct,
        pool,
        ctx.n_eval,
        derive_seed(ctx.seed, &["eval-set", task.as_str(), &unit.src.id()]),
    )?;

    let tune_seed = derive_seed(ctx.seed, &["tuning", task.as_str(), &unit.src.id()]);
    let tuning = match ctx.pretuned.get(&(task, unit.spec.kind, unit.src.id())) {
        Some(result) => (*result).clone(),
        None => tune(
            unit.spec,
            &surrogates,
            &eval.images,
            &eval.labels,
            &ctx.tuning,
            tune_seed,
        )?,
    };
    Ok((eval, tune_seed, tuning))
}

fn run_unit_inner(
    unit: &WorkUnit<'_>,
    ctx: &RunContext<'_>,
) -> Result<(Vec<ExperimentCell>, Option<TuningRecord>)> {
    let (eval, tune_seed, tuning) = unit_tuning(unit, ctx)?;
    let record = TuningRecord {
        task: unit.task,
        attack: unit.spec.kind,
        src: unit.src.id(),
        result: tuning.clone(),
    };

    if !tuning.feasible {
        let rows = unit
            .pending
            .iter()
            .map(|p| base_cell(p, ctx.n_eval, tune_seed, CellStatus::ConstraintInfeasible,
                Some("no parameter met the mean-SSIM floor".to_string())))
            .collect();
        return Ok((rows, Some(record)));
    }

    // Regenerate the adversarial set at the chosen grid point, reusing the
    // exact per-point seed the tuner used, so the white-box diagonal agrees
    // with the tuner's recorded success rate bit for bit.
    let chosen = tuning
        .trace
        .iter()
        .position(|p| p.param == tuning.gamma)
        .ok_or_else(|| Error::Eval("tuned parameter missing from its own trace".to_string()))?;
    let gen_seed = derive_seed(tune_seed, &["tune", unit.spec.kind.name(), &chosen.to_string()]);
    let model = match &unit.src {
        SourceRef::Model(prov) => Some(*ctx.nets.get(&prov.id()).expect("validated")),
        SourceRef::Dataset { .. } => None,
    };
    let adv = run_attack(
        unit.spec.kind,
        model,
        &eval.images,
        &eval.labels,
        tuning.gamma,
        &unit.spec.hyper,
        gen_seed,
    )?;

    let classes: Vec<u8> = eval.labels.iter().map(|&l| l as u8).collect();
    let rows = unit
        .pending
        .iter()
        .map(|p| {
            let net = match ctx.nets.get(&p.trg.id()) {
                Some(net) => net,
                None => {
                    return base_cell(p, ctx.n_eval, gen_seed, CellStatus::Error,
                        Some(format!("no trained model {}", p.trg.id())));
                }
            };
            match score_target(net, &adv.adversarial, &eval) {
                Ok(flips) => {
                    let asr = flips.iter().filter(|f| **f).count() as f64 / flips.len() as f64;
                    let mut cell = base_cell(p, eval.labels.len(), gen_seed, CellStatus::Ok, None);
                    cell.asr = Some(asr);
                    cell.gamma = tuning.gamma;
                    cell.classes = classes.clone();
                    cell.flips = flips;
                    cell
                }
                Err(e) => base_cell(p, ctx.n_eval, gen_seed, CellStatus::Error, Some(e.to_string())),
            }
        })
        .collect();
    Ok((rows, Some(record)))
}

fn score_target(
    net: &Network<f32>,
    adversarial: &crate::diff::Tensor<f32>,
    eval: &EvalSet,
) -> Result<Vec<bool>> {
    let probs = net.predict_proba(adversarial)?;
    let k = probs.shape()[1];
    Ok(probs
        .data()
        .chunks_exact(k)
        .zip(&eval.labels)
        .map(|(row, &label)| argmax_row(row) != label)
        .collect())
}

fn base_cell(
    p: &PendingCell,
    n: usize,
    seed: u64,
    status: CellStatus,
    detail: Option<String>,
) -> ExperimentCell {
    ExperimentCell {
        task: p.task,
        attack: p.attack,
        family: p.attack.family(),
        src: p.src.clone(),
        trg: p.trg.clone(),
        case: p.case,
        status,
        asr: None,
        n,
        gamma: None,
        seed,
        detail,
        classes: Vec::new(),
        flips: Vec::new(),
    }
}

fn error_rows(unit: &WorkUnit<'_>, ctx: &RunContext<'_>, msg: &str) -> Vec<ExperimentCell> {
    unit.pending
        .iter()
        .map(|p| base_cell(p, ctx.n_eval, ctx.seed, CellStatus::Error, Some(msg.to_string())))
        .collect()
}
