//! Attack-parameter selection: maximize attack success rate on the
//! attacker's own models subject to a floor on mean structural similarity.
//!
//! The tuner sweeps the attack's whole parameter grid, records (ASR, mean
//! SSIM) at every point, and picks the feasible point with the highest ASR,
//! breaking ties toward the smaller parameter (less visible perturbation).
//! When no point meets the similarity floor the result carries its full
//! trace and a `feasible = false` flag; the caller decides what to do with
//! the cell rather than the tuner silently relaxing the constraint.

use crate::attack::{run_attack, AttackFamily, AttackKind, AttackSpec};
use crate::diff::{argmax_row, Network, Tensor};
use crate::error::{Error, Result};
use crate::perceptual::{ssim, SsimConfig};
use crate::rng::derive_seed;
use serde::{Deserialize, Serialize};

/// Knobs of the tuning procedure itself (the per-attack grids live in
/// [`AttackSpec`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    /// Minimum acceptable mean SSIM between originals and perturbed images.
    pub alpha: f64,
    /// How many surrogate-correct, class-balanced samples to tune on.
    pub n_tune: usize,
    pub ssim: SsimConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            alpha: 0.4,
            n_tune: 100,
            ssim: SsimConfig::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "similarity floor alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.n_tune == 0 {
            return Err(Error::Config("tuning needs at least one sample".to_string()));
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Parameter value; `None` for parameter-free attacks.
    pub param: Option<f64>,
    pub asr: f64,
    pub mean_ssim: f64,
    /// Whether this point meets the similarity floor.
    pub feasible: bool,
}

/// Outcome of tuning one attack against one surrogate side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub attack: AttackKind,
    /// Chosen parameter; `None` when infeasible or parameter-free.
    pub gamma: Option<f64>,
    /// ASR and mean SSIM at the chosen point, when one exists.
    pub asr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub feasible: bool,
    /// One entry per grid point, in ascending parameter order.
    pub trace: Vec<TracePoint>,
}

impl TuningResult {
    /// Human-readable record of the tuned setting, e.g. `FGSM, ε = 0.1`.
    pub fn describe(&self) -> String {
        match self.gamma {
            Some(g) => format!("{}, {} = {}", self.attack.name(), param_glyph(self.attack), g),
            None if self.feasible => self.attack.name().to_string(),
            None => format!("{}, constraint-infeasible", self.attack.name()),
        }
    }
}

fn param_glyph(kind: AttackKind) -> &'static str {
    match kind.param_name() {
        Some("epsilon") => "\u{3b5}",
        Some("sigma") => "\u{3c3}",
        Some("box-size") => "box size",
        Some(other) => other,
        None => "",
    }
}

/// Attack success rate: the fraction of adversarial images the model labels
/// differently from the true label. The originals are assumed to be
/// correctly classified (the evaluation-set selection upstream guarantees
/// it), so this is exactly the fraction of successful evasions.
pub fn asr(
    model: &Network<f32>,
    originals: &Tensor<f32>,
    adversarials: &Tensor<f32>,
    labels: &[usize],
) -> Result<f64> {
    if originals.shape() != adversarials.shape() {
        return Err(Error::Eval(format!(
            "originals {:?} and adversarials {:?} differ in shape",
            originals.shape(),
            adversarials.shape()
        )));
    }
    let [b_n, _, _, _] = adversarials.dims4("asr")?;
    if labels.len() != b_n {
        return Err(Error::Eval(format!(
            "asr got {} images but {} labels",
            b_n,
            labels.len()
        )));
    }
    if b_n == 0 {
        return Err(Error::EmptyEval("asr over an empty batch".to_string()));
    }
    let probs = model.predict_proba(adversarials)?;
    let k_n = probs.shape()[1];
    let flips = probs
        .data()
        .chunks_exact(k_n)
        .zip(labels)
        .filter(|(row, &y)| argmax_row(row) != y)
        .count();
    Ok(flips as f64 / b_n as f64)
}

/// Sweeps the grid and picks the feasible point of maximal ASR, ties toward
/// the smaller parameter.
///
/// `surrogates` are the attacker-side models: exactly one for mathematical
/// attacks (it also supplies the gradients/scores); one or more for image
/// transformations, whose ASR is averaged across them.
pub fn tune(
    spec: &AttackSpec,
    surrogates: &[&Network<f32>],
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &TuningConfig,
    seed: u64,
) -> Result<TuningResult> {
    cfg.validate()?;
    if surrogates.is_empty() {
        return Err(Error::Config("tuning needs at least one surrogate model".to_string()));
    }
    if spec.kind.family() == AttackFamily::Mathematical && surrogates.len() != 1 {
        return Err(Error::Config(format!(
            "mathematical attack {} tunes against exactly one surrogate, got {}",
            spec.kind.name(),
            surrogates.len()
        )));
    }
    let [b_n, _, _, _] = x.dims4("tune")?;
    if b_n == 0 || labels.len() != b_n {
        return Err(Error::Eval(format!(
            "tuning batch of {} images with {} labels",
            b_n,
            labels.len()
        )));
    }

    let points: Vec<Option<f64>> = match &spec.grid {
        Some(grid) => grid.points().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let model = (spec.kind.family() == AttackFamily::Mathematical).then(|| surrogates[0]);

    let mut trace = Vec::with_capacity(points.len());
    for (i, &param) in points.iter().enumerate() {
        let point_seed = derive_seed(seed, &["tune", spec.kind.name(), &i.to_string()]);
        let out = run_attack(spec.kind, model, x, labels, param, &spec.hyper, point_seed)?;

        let mut ssim_total = 0.0;
        for b in 0..b_n {
            ssim_total += ssim(
                &x.slice_batch(b)?,
                &out.adversarial.slice_batch(b)?,
                &cfg.ssim,
            )?;
        }
        let mean_ssim = ssim_total / b_n as f64;

        let mut asr_total = 0.0;
        for surrogate in surrogates {
            asr_total += asr(surrogate, x, &out.adversarial, labels)?;
        }
        let asr_mean = asr_total / surrogates.len() as f64;

        trace.push(TracePoint {
            param,
            asr: asr_mean,
            mean_ssim,
            feasible: mean_ssim >= cfg.alpha,
        });
    }

    Ok(select(spec.kind, trace))
}

/// Pure selection rule over an evaluated trace: feasible point of maximal
/// ASR, first (smallest-parameter) point on ties.
fn select(attack: AttackKind, trace: Vec<TracePoint>) -> TuningResult {
    let mut best: Option<&TracePoint> = None;
    for point in trace.iter().filter(|p| p.feasible) {
        if best.is_none_or(|b| point.asr > b.asr) {
            best = Some(point);
        }
    }
    match best {
        Some(point) => TuningResult {
            attack,
            gamma: point.param,
            asr: Some(point.asr),
            mean_ssim: Some(point.mean_ssim),
            feasible: true,
            trace: trace.clone(),
        },
        None => TuningResult {
            attack,
            gamma: None,
            asr: None,
            mean_ssim: None,
            feasible: false,
            trace,
        },
    }
}

/// Tunes separately on each true class, mirroring per-class evaluation.
/// Returns results indexed by class label (0 and 1).
pub fn tune_per_class(
    spec: &AttackSpec,
    surrogates: &[&Network<f32>],
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &TuningConfig,
    seed: u64,
) -> Result<[TuningResult; 2]> {
    let [b_n, _, _, _] = x.dims4("tune-per-class")?;
    if labels.len() != b_n {
        return Err(Error::Eval(format!(
            "per-class tuning got {} images but {} labels",
            b_n,
            labels.len()
        )));
    }
    let mut results = Vec::with_capacity(2);
    for class in 0..2usize {
        let idx: Vec<usize> = (0..b_n).filter(|&b| labels[b] == class).collect();
        if idx.is_empty() {
            return Err(Error::Eval(format!(
                "per-class tuning has no samples of class {class}"
            )));
        }
        let slices: Vec<Tensor<f32>> = idx
            .iter()
            .map(|&b| x.slice_batch(b))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<f32>> = slices.iter().collect();
        let subset = crate::diff::stack(&refs)?;
        let subset_labels = vec![class; idx.len()];
        results.push(tune(spec, surrogates, &subset, &subset_labels, cfg, seed)?);
    }
    Ok([results.remove(0), results.remove(0)])
}
