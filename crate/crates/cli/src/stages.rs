//! The five pipeline stages plus folder import.
//!
//! Each stage reads its predecessor's artifacts from the output directory
//! and refuses to start when they are missing, naming the stage to run
//! first. Progress goes to stderr; data only to files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dumb_core::data::{
    dedup, generate_dataset, ingest_folder, load_dataset, rebalance, save_dataset, select_equal,
    split, DatasetProvenance, DatasetSplit, SourceSpec,
};
use dumb_core::harness::{
    self, run_experiment_with, write_figure_bundle, write_run_artifacts, CellStatus, PairCase,
    ResultTable, RunOutput, TuningRecord,
};
use dumb_core::model::{evaluate_baseline, train};
use dumb_core::rng::derive_seed;
use dumb_core::{
    AttackFamily, ModelRecord, ModelRegistry, Sample, SourceId, TaskId, TaskSpec,
};

use crate::config::{write_stamp, RunConfig};
use crate::Failure;

fn dataset_dir(out: &Path, task: TaskId, source: SourceId) -> PathBuf {
    out.join("data").join(format!("{task}-{source}"))
}

fn require_dataset(out: &Path, task: TaskId, source: SourceId) -> Result<PathBuf, Failure> {
    let dir = dataset_dir(out, task, source);
    if !dir.join("manifest.json").exists() {
        return Err(Failure::Missing(format!(
            "no dataset at {}; run gen-data first",
            dir.display()
        )));
    }
    Ok(dir)
}

/// Renders every configured (task, source) dataset and splits it once.
/// Datasets already on disk are left alone; under the same configuration a
/// regeneration would be byte-identical anyway.
pub fn gen_data(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let data_root = out.join("data");
    std::fs::create_dir_all(&data_root)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", data_root.display())))?;
    for &task in &cfg.tasks {
        let spec = TaskSpec::new(task, cfg.image_size)?;
        for &source in &cfg.sources {
            let dir = dataset_dir(out, task, source);
            if dir.join("manifest.json").exists() {
                eprintln!("[gen-data] {task}-{source} already present");
                continue;
            }
            let gen_seed = derive_seed(cfg.seed, &["data", task.as_str(), source.as_str()]);
            let samples =
                generate_dataset(&spec, &SourceSpec::builtin(source), cfg.per_class, gen_seed)?;
            let parts = split(
                &samples,
                cfg.split,
                derive_seed(cfg.seed, &["split", task.as_str(), source.as_str()]),
            )?;
            let ds = DatasetSplit {
                train: parts.train,
                validation: parts.validation,
                test: parts.test,
                provenance: DatasetProvenance {
                    task,
                    source,
                    seed: gen_seed,
                    image_size: cfg.image_size,
                    origin: "generated".to_string(),
                },
            };
            save_dataset(&ds, &dir)?;
            eprintln!(
                "[gen-data] {task}-{source}: {} train / {} validation / {} test",
                ds.train.len(),
                ds.validation.len(),
                ds.test.len()
            );
        }
    }
    write_stamp(&data_root, cfg)
}

/// Imports a folder of class-labelled images as one (task, source) dataset,
/// dropping exact duplicates and equalizing the class counts before the
/// usual split. The folder must hold one subdirectory per class name.
pub fn ingest(
    out: &Path,
    cfg: &RunConfig,
    task: &str,
    source: &str,
    folder: &Path,
) -> Result<(), Failure> {
    let task: TaskId = task
        .parse()
        .map_err(|e: dumb_core::Error| Failure::Config(e.to_string()))?;
    let source: SourceId = source
        .parse()
        .map_err(|e: dumb_core::Error| Failure::Config(e.to_string()))?;
    let dir = dataset_dir(out, task, source);
    if dir.join("manifest.json").exists() {
        return Err(Failure::Config(format!(
            "a dataset already lives at {}; delete it or use a fresh --out",
            dir.display()
        )));
    }
    let spec = TaskSpec::new(task, cfg.image_size)?;
    let raw = ingest_folder(folder, &spec)?;
    let before = raw.len();
    let (unique, removed) = dedup(raw);
    let equal = select_equal(
        &unique,
        None,
        derive_seed(cfg.seed, &["ingest", task.as_str(), source.as_str()]),
    )?;
    let parts = split(
        &equal,
        cfg.split,
        derive_seed(cfg.seed, &["split", task.as_str(), source.as_str()]),
    )?;
    let ds = DatasetSplit {
        train: parts.train,
        validation: parts.validation,
        test: parts.test,
        provenance: DatasetProvenance {
            task,
            source,
            seed: cfg.seed,
            image_size: cfg.image_size,
            origin: folder.display().to_string(),
        },
    };
    save_dataset(&ds, &dir)?;
    let data_root = out.join("data");
    eprintln!(
        "[ingest] {task}-{source}: {before} read, {removed} duplicates dropped, \
         {} kept ({} train / {} validation / {} test)",
        equal.len(),
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    );
    write_stamp(&data_root, cfg)
}

/// Trains one model per grid slot, checkpointing into the registry. Slots
/// already in the registry are skipped, so an interrupted run picks up
/// where it stopped.
pub fn train_all(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let models_root = out.join("models");
    let registry = ModelRegistry::open(&models_root)?;
    let have: BTreeSet<String> = registry.ids()?.into_iter().collect();
    let axes = cfg.axes();
    let tcfg = cfg.training();

    let total = cfg.tasks.len() * axes.model_count();
    let done = AtomicUsize::new(have.len());
    let registry = Mutex::new(registry);

    // One dataset in memory at a time; its grid slots train in parallel.
    for &task in &cfg.tasks {
        for &source in &cfg.sources {
            let jobs: Vec<_> = axes
                .provenances(task, cfg.seed)
                .into_iter()
                .filter(|p| p.source == source && !have.contains(&p.id()))
                .collect();
            if jobs.is_empty() {
                continue;
            }
            let dir = require_dataset(out, task, source)?;
            let ds = load_dataset(&dir)?;
            jobs.par_iter()
                .map(|prov| -> Result<(), Failure> {
                    let train_set = rebalance(
                        &ds.train,
                        prov.balance,
                        0,
                        derive_seed(cfg.seed, &["rebalance", &prov.id()]),
                    )?;
                    let mut record =
                        train(prov.arch, &train_set, &ds.validation, prov.clone(), &tcfg)?;
                    let metrics = evaluate_baseline(&mut record, &ds.test)?;
                    registry
                        .lock()
                        .expect("registry lock")
                        .save(&record)?;
                    eprintln!(
                        "[train-all] {}/{total} {} val-F1 {:.3} test-F1 {:.3}",
                        done.fetch_add(1, Ordering::Relaxed) + 1,
                        prov.id(),
                        record.val_f1,
                        metrics.f1
                    );
                    Ok(())
                })
                .collect::<Result<Vec<_>, Failure>>()?;
        }
    }
    if !have.is_empty() {
        eprintln!("[train-all] {} models were already trained", have.len());
    }
    write_stamp(&models_root, cfg)
}

/// Loads the full model grid and the per-source test pools the attack
/// stages evaluate on.
fn load_models_and_pools(
    out: &Path,
    cfg: &RunConfig,
) -> Result<(Vec<ModelRecord>, BTreeMap<(TaskId, SourceId), Vec<Sample>>), Failure> {
    let models_root = out.join("models");
    if !models_root.join("index.json").exists() {
        return Err(Failure::Missing(format!(
            "no model registry at {}; run train-all first",
            models_root.display()
        )));
    }
    let registry = ModelRegistry::open(&models_root)?;
    let have: BTreeSet<String> = registry.ids()?.into_iter().collect();
    let axes = cfg.axes();
    let mut missing = Vec::new();
    for &task in &cfg.tasks {
        for prov in axes.provenances(task, cfg.seed) {
            if !have.contains(&prov.id()) {
                missing.push(prov.id());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Failure::Missing(format!(
            "{} of {} grid models are untrained (first: {}); run train-all first",
            missing.len(),
            cfg.tasks.len() * axes.model_count(),
            missing[0]
        )));
    }
    let mut models = Vec::new();
    for &task in &cfg.tasks {
        for prov in axes.provenances(task, cfg.seed) {
            models.push(registry.load(&prov.id())?);
        }
    }
    let mut pools = BTreeMap::new();
    for &task in &cfg.tasks {
        for &source in &cfg.sources {
            let dir = require_dataset(out, task, source)?;
            let ds = load_dataset(&dir)?;
            pools.insert((task, source), ds.test);
        }
    }
    Ok((models, pools))
}

/// On-disk form of the tuning stage: the records plus the hash of the
/// experiment configuration that produced them.
#[derive(Serialize, Deserialize)]
struct TunedFile {
    config_hash: String,
    records: Vec<TuningRecord>,
}

/// Tunes every (task, attack, source) unit and persists the records for the
/// matrix run.
pub fn tune_attacks(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let exp = cfg.experiment()?;
    let tuning_root = out.join("tuning");
    let path = tuning_root.join("tunings.json");
    if path.exists() {
        eprintln!(
            "[tune-attacks] {} already exists; delete it to retune",
            path.display()
        );
        return Ok(());
    }
    let (models, pools) = load_models_and_pools(out, cfg)?;
    let progress = |k: usize, n: usize, key: &str| eprintln!("[tune-attacks] {k}/{n} {key}");
    let records = harness::tune_attacks(&models, &pools, &exp, Some(&progress))?;
    let infeasible = records.iter().filter(|r| !r.result.feasible).count();
    std::fs::create_dir_all(&tuning_root)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", tuning_root.display())))?;
    let file = TunedFile {
        config_hash: exp.config_hash(),
        records,
    };
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&file)
            .map_err(|e| Failure::Runtime(e.to_string()))?,
    )
    .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    eprintln!(
        "[tune-attacks] {} units tuned, {infeasible} hit the perceptual floor",
        file.records.len()
    );
    Ok(())
}

/// Evaluates every tuned attack against every target and writes the result
/// table. Finished units are cached under `results/units/`; pass `--resume`
/// to accept an existing cache.
pub fn run_matrix(out: &Path, cfg: &RunConfig, resume: bool) -> Result<(), Failure> {
    let exp = cfg.experiment()?;
    let path = out.join("tuning").join("tunings.json");
    if !path.exists() {
        return Err(Failure::Missing(format!(
            "no tuning records at {}; run tune-attacks first",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let tuned: TunedFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(format!("corrupt {}: {e}", path.display())))?;
    if tuned.config_hash != exp.config_hash() {
        return Err(Failure::Config(format!(
            "{} belongs to a different configuration; retune or use a fresh --out",
            path.display()
        )));
    }

    let results_dir = out.join("results");
    let units_dir = results_dir.join("units");
    let cached = std::fs::read_dir(&units_dir)
        .map(|d| d.count())
        .unwrap_or(0);
    if cached > 0 && !resume {
        return Err(Failure::Config(format!(
            "{} already holds {cached} finished units; pass --resume to reuse them",
            units_dir.display()
        )));
    }

    let (models, pools) = load_models_and_pools(out, cfg)?;
    let progress = |k: usize, n: usize, key: &str| eprintln!("[run-matrix] {k}/{n} {key}");
    let output = run_experiment_with(
        &models,
        &pools,
        &exp,
        Some(&results_dir),
        &tuned.records,
        Some(&progress),
    )?;
    write_run_artifacts(&results_dir, &output)?;

    let count = |status: CellStatus| {
        output
            .table
            .cells
            .iter()
            .filter(|c| c.status == status)
            .count()
    };
    eprintln!(
        "[run-matrix] {} rows ({} ok, {} constraint-infeasible, {} error) -> {}",
        output.table.cells.len(),
        count(CellStatus::Ok),
        count(CellStatus::ConstraintInfeasible),
        count(CellStatus::Error),
        results_dir.join("results.csv").display()
    );
    Ok(())
}

/// Reduces the result table to the figure bundle, the baseline score table,
/// and a plain-text digest. Byte-identical across repeated invocations.
pub fn report(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let results_dir = out.join("results");
    let table_path = results_dir.join("results.json");
    if !table_path.exists() {
        return Err(Failure::Missing(format!(
            "no results at {}; run run-matrix first",
            table_path.display()
        )));
    }
    let table = ResultTable::load_json(&table_path)?;
    if table.cells.is_empty() {
        return Err(Failure::Missing(
            "the results table has no rows; run run-matrix first".to_string(),
        ));
    }
    let tunings: Vec<TuningRecord> = match std::fs::read_to_string(results_dir.join("tunings.json"))
    {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Failure::Runtime(format!("corrupt tunings.json: {e}")))?,
        Err(_) => Vec::new(),
    };
    let output = RunOutput { table, tunings };

    let report_dir = out.join("report");
    std::fs::create_dir_all(&report_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", report_dir.display())))?;
    write_figure_bundle(&report_dir, &output)?;
    write_baseline_table(out, &report_dir)?;
    let summary = render_summary(&output);
    std::fs::write(report_dir.join("summary.txt"), &summary)
        .map_err(|e| Failure::Runtime(format!("cannot write summary: {e}")))?;
    write_stamp(&report_dir, cfg)?;
    eprintln!("[report] wrote {}", report_dir.display());
    Ok(())
}

/// Test-set scores of every trained model, one row per grid slot.
fn write_baseline_table(out: &Path, report_dir: &Path) -> Result<(), Failure> {
    let models_root = out.join("models");
    if !models_root.join("index.json").exists() {
        return Ok(());
    }
    let registry = ModelRegistry::open(&models_root)?;
    let mut ids = registry.ids()?;
    ids.sort();
    let mut csv = String::from("task,source,balance,arch,val_f1,test_f1,test_accuracy\n");
    for id in ids {
        let entry = registry.entry(&id)?;
        let p = &entry.provenance;
        let (f1, acc) = match &entry.baseline {
            Some(m) => (format!("{:.6}", m.f1), format!("{:.6}", m.accuracy)),
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            p.task, p.source, p.balance, p.arch, entry.val_f1, f1, acc
        ));
    }
    std::fs::write(report_dir.join("baseline.csv"), csv)
        .map_err(|e| Failure::Runtime(format!("cannot write baseline.csv: {e}")))?;
    Ok(())
}

fn render_summary(output: &RunOutput) -> String {
    let cells = &output.table.cells;
    let mut s = String::new();
    s.push_str("transfer benchmark digest\n");
    s.push_str(&format!("config {}\n", output.table.metadata.config_hash));
    s.push_str(&format!(
        "seed {}  eval-set {}  ssim floor {}\n\n",
        output.table.metadata.seed, output.table.metadata.n_eval, output.table.metadata.alpha
    ));

    let by_status = |status: CellStatus| cells.iter().filter(|c| c.status == status).count();
    s.push_str(&format!(
        "rows: {} total, {} ok, {} constraint-infeasible, {} error\n\n",
        cells.len(),
        by_status(CellStatus::Ok),
        by_status(CellStatus::ConstraintInfeasible),
        by_status(CellStatus::Error)
    ));

    for family in [AttackFamily::Mathematical, AttackFamily::NonMathematical] {
        let asrs: Vec<f64> = cells
            .iter()
            .filter(|c| c.family == family)
            .filter_map(|c| c.asr)
            .collect();
        if asrs.is_empty() {
            continue;
        }
        let mean = asrs.iter().sum::<f64>() / asrs.len() as f64;
        s.push_str(&format!(
            "{family} attacks: mean ASR {mean:.4} over {} cells\n",
            asrs.len()
        ));
    }

    s.push_str("\ngradient-attack ASR by agreement case (pooled over tasks):\n");
    for case in PairCase::all() {
        let asrs: Vec<f64> = cells
            .iter()
            .filter(|c| c.family == AttackFamily::Mathematical && c.case == case)
            .filter_map(|c| c.asr)
            .collect();
        if asrs.is_empty() {
            continue;
        }
        let mean = asrs.iter().sum::<f64>() / asrs.len() as f64;
        let flag = |same: bool| if same { "same" } else { "other" };
        s.push_str(&format!(
            "  {case} ({} source, {} arch, {} balance): {mean:.4} over {} cells\n",
            flag(case.source_equal()),
            flag(case.arch_equal()),
            flag(case.balance_equal()),
            asrs.len()
        ));
    }

    let wins = harness::compare_families(cells);
    let comparisons: usize = wins.iter().map(|w| w.comparisons).sum();
    if comparisons > 0 {
        let won: usize = wins.iter().map(|w| w.non_math_wins).sum();
        s.push_str(&format!(
            "\nimage-space corruptions beat the gradient attack in {won} of \
             {comparisons} (task, case, pairing) comparisons\n"
        ));
    }
    s.push_str("\nper-figure tables live under figures/\n");
    s
}
