//! The run configuration file.
//!
//! One JSON document drives every stage. Missing fields take the defaults
//! below, and the materialized result is written to
//! `<out>/effective-config.json` the first time any stage touches an output
//! directory; later invocations against the same directory must hash to the
//! same configuration or they are refused.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dumb_core::attack::{AttackHyper, AttackSpec, ParamGrid};
use dumb_core::harness::{ExperimentConfig, GridAxes};
use dumb_core::perceptual::SsimConfig;
use dumb_core::{ArchId, AttackKind, BalanceLevel, SourceId, TaskId};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own streams from it.
    pub seed: u64,
    pub image_size: usize,
    /// Images generated per class for each (task, source) dataset.
    pub per_class: usize,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub tasks: Vec<TaskId>,
    pub sources: Vec<SourceId>,
    pub balances: Vec<BalanceLevel>,
    pub archs: Vec<ArchId>,
    pub attacks: Vec<AttackKind>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Mean-SSIM floor for attack tuning.
    pub alpha: f64,
    /// Evaluation-set size per attack source (split evenly over the classes).
    pub n_eval: usize,
    /// Iteration knobs shared by all attacks.
    pub hyper: AttackHyper,
    /// Per-attack parameter grids; attacks not listed use their built-in
    /// grid scaled to the image size.
    pub grids: BTreeMap<AttackKind, ParamGrid>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 17,
            image_size: 32,
            per_class: 5000,
            split: [0.7, 0.1, 0.2],
            tasks: TaskId::all().to_vec(),
            sources: SourceId::all().to_vec(),
            balances: BalanceLevel::all().to_vec(),
            archs: ArchId::all().to_vec(),
            attacks: AttackKind::all().to_vec(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            alpha: 0.4,
            n_eval: 100,
            hyper: AttackHyper::default(),
            grids: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Failure::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Failure::Config(format!("invalid config {}: {e}", p.display()))
                })?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.per_class == 0 {
            return Err(Failure::Config("per_class must be positive".to_string()));
        }
        if self.tasks.is_empty() {
            return Err(Failure::Config("no tasks configured".to_string()));
        }
        let mut tasks = self.tasks.clone();
        tasks.sort();
        tasks.dedup();
        if tasks.len() != self.tasks.len() {
            return Err(Failure::Config("duplicate task in configuration".to_string()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Failure::Config(
                "epochs and batch_size must be positive".to_string(),
            ));
        }
        // Image size, split ratios, axes, attack set, and tuning knobs are
        // validated by the pieces that consume them; trigger that eagerly so
        // a bad file fails before any stage starts.
        dumb_core::data::TaskSpec::new(self.tasks[0], self.image_size)
            .map_err(|e| Failure::Config(e.to_string()))?;
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|&r| r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Failure::Config(format!(
                "split {:?} must be positive and sum to 1",
                self.split
            )));
        }
        self.experiment()?;
        Ok(())
    }

    /// The grid slice the run covers.
    pub fn axes(&self) -> GridAxes {
        GridAxes {
            sources: self.sources.clone(),
            balances: self.balances.clone(),
            archs: self.archs.clone(),
        }
    }

    /// The attack/evaluation half of the configuration, in the form the
    /// experiment runner consumes.
    pub fn experiment(&self) -> Result<ExperimentConfig, Failure> {
        let attacks: Vec<AttackSpec> = self
            .attacks
            .iter()
            .map(|&kind| match self.grids.get(&kind) {
                Some(grid) => {
                    AttackSpec::new(kind, Some(grid.clone()), self.hyper.clone())
                }
                None => {
                    let mut spec = AttackSpec::standard(kind, self.image_size);
                    spec.hyper = self.hyper.clone();
                    Ok(spec)
                }
            })
            .collect::<dumb_core::Result<_>>()
            .map_err(|e| Failure::Config(e.to_string()))?;
        let cfg = ExperimentConfig {
            attacks,
            n_eval: self.n_eval,
            alpha: self.alpha,
            ssim: SsimConfig::default(),
            seed: self.seed,
            axes: self.axes(),
        };
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn training(&self) -> dumb_core::model::TrainingConfig {
        dumb_core::model::TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
        }
    }

    /// Hex digest of the materialized configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Pins the output directory to this configuration: writes
/// `effective-config.json` on first contact and refuses the directory if a
/// different configuration already owns it.
pub fn claim_out_dir(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let path = out.join("effective-config.json");
    if path.exists() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let existing: EffectiveConfig = serde_json::from_str(&text).map_err(|e| {
            Failure::Runtime(format!("corrupt {}: {e}", path.display()))
        })?;
        if existing.config_hash != cfg.hash() {
            return Err(Failure::Config(format!(
                "{} was produced by a different configuration; use a fresh --out",
                out.display()
            )));
        }
        return Ok(());
    }
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let effective = EffectiveConfig {
        config_hash: cfg.hash(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&effective).expect("config serializes");
    std::fs::write(&path, json)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EffectiveConfig {
    config_hash: String,
    config: RunConfig,
}

/// Small per-stage marker tying an artifact directory to the run.
pub fn write_stamp(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let json = serde_json::json!({ "config_hash": cfg.hash() });
    std::fs::write(dir.join("run.json"), json.to_string())
        .map_err(|e| Failure::Runtime(format!("cannot stamp {}: {e}", dir.display())))?;
    Ok(())
}
