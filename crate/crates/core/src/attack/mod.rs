//! The thirteen evasion procedures the benchmark runs against every model.
//!
//! Seven are mathematical (they need a model: five gradient-sign variants,
//! DeepFool's boundary search, and the score-based Square search) and six are
//! plain image transformations that never look at a model. Each attack
//! exposes at most one tunable parameter; everything else is fixed in
//! [`AttackHyper`] so a result row fully determines how its image was made.

mod deepfool;
mod gradient;
mod persist;
mod square;
mod transform;

pub use deepfool::{deepfool, DeepFoolOutcome};
pub use gradient::{bim, fgsm, pgd, rfgsm, tifgsm};
pub use persist::{AdvExample, AdvProvenance, AdversarialSet};
pub use square::{square_attack, SquareOutcome};
pub use transform::{
    box_blur, gaussian_noise, grayscale, invert, random_black_box, salt_pepper,
};

use crate::diff::{stack, Network, Tensor};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use serde::{Deserialize, Serialize};

/// Whether an attack needs gradients/scores from a model or is a pure image
/// transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackFamily {
    Mathematical,
    NonMathematical,
}

impl AttackFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackFamily::Mathematical => "mathematical",
            AttackFamily::NonMathematical => "non-mathematical",
        }
    }
}

impl std::fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Bim,
    DeepFool,
    Fgsm,
    Pgd,
    Rfgsm,
    Square,
    Tifgsm,
    BoxBlur,
    GaussianNoise,
    Grayscale,
    Invert,
    RandomBlackBox,
    SaltPepper,
}

impl AttackKind {
    /// All thirteen attacks, mathematical first, each group alphabetical.
    pub fn all() -> [AttackKind; 13] {
        [
            AttackKind::Bim,
            AttackKind::DeepFool,
            AttackKind::Fgsm,
            AttackKind::Pgd,
            AttackKind::Rfgsm,
            AttackKind::Square,
            AttackKind::Tifgsm,
            AttackKind::BoxBlur,
            AttackKind::GaussianNoise,
            AttackKind::Grayscale,
            AttackKind::Invert,
            AttackKind::RandomBlackBox,
            AttackKind::SaltPepper,
        ]
    }

    pub fn mathematical() -> [AttackKind; 7] {
        [
            AttackKind::Bim,
            AttackKind::DeepFool,
            AttackKind::Fgsm,
            AttackKind::Pgd,
            AttackKind::Rfgsm,
            AttackKind::Square,
            AttackKind::Tifgsm,
        ]
    }

    pub fn non_mathematical() -> [AttackKind; 6] {
        [
            AttackKind::BoxBlur,
            AttackKind::GaussianNoise,
            AttackKind::Grayscale,
            AttackKind::Invert,
            AttackKind::RandomBlackBox,
            AttackKind::SaltPepper,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Bim => "BIM",
            AttackKind::DeepFool => "DeepFool",
            AttackKind::Fgsm => "FGSM",
            AttackKind::Pgd => "PGD",
            AttackKind::Rfgsm => "RFGSM",
            AttackKind::Square => "Square",
            AttackKind::Tifgsm => "TIFGSM",
            AttackKind::BoxBlur => "box-blur",
            AttackKind::GaussianNoise => "gaussian-noise",
            AttackKind::Grayscale => "grayscale",
            AttackKind::Invert => "invert",
            AttackKind::RandomBlackBox => "random-black-box",
            AttackKind::SaltPepper => "salt-pepper",
        }
    }

    pub fn family(self) -> AttackFamily {
        match self {
            AttackKind::Bim
            | AttackKind::DeepFool
            | AttackKind::Fgsm
            | AttackKind::Pgd
            | AttackKind::Rfgsm
            | AttackKind::Square
            | AttackKind::Tifgsm => AttackFamily::Mathematical,
            _ => AttackFamily::NonMathematical,
        }
    }

    /// Name of the one tunable parameter, if the attack has one.
    pub fn param_name(self) -> Option<&'static str> {
        match self {
            AttackKind::Bim
            | AttackKind::Fgsm
            | AttackKind::Pgd
            | AttackKind::Rfgsm
            | AttackKind::Square
            | AttackKind::Tifgsm => Some("epsilon"),
            AttackKind::DeepFool => Some("overshoot"),
            AttackKind::BoxBlur => Some("radius"),
            AttackKind::GaussianNoise => Some("sigma"),
            AttackKind::RandomBlackBox => Some("box-size"),
            AttackKind::SaltPepper => Some("amount"),
            AttackKind::Grayscale | AttackKind::Invert => None,
        }
    }

    pub fn from_name(name: &str) -> Option<AttackKind> {
        AttackKind::all().into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::from_name(s)
            .ok_or_else(|| Error::Config(format!("unknown attack name {s:?}")))
    }
}

/// An inclusive arithmetic grid of candidate parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min < max) || !(step > 0.0) {
            return Err(Error::Config(format!(
                "parameter grid needs min < max and step > 0, got [{min}, {max}] step {step}"
            )));
        }
        Ok(ParamGrid { min, max, step })
    }

    /// Grid points in ascending order. The count is derived by rounding
    /// (max - min) / step so fractional steps like 0.01 cover the intended
    /// number of points despite accumulated float error.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).round() as usize;
        (0..=n)
            .map(|i| self.min + i as f64 * self.step)
            .filter(|v| *v <= self.max + 1e-9)
            .collect()
    }
}

/// Fixed hyperparameters shared by every run of an attack. Only one knob per
/// attack is ever tuned; these stay constant and ride along in result rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackHyper {
    /// Iteration count for BIM / PGD / RFGSM / TIFGSM.
    pub steps: usize,
    /// Per-iteration step size as a fraction of epsilon.
    pub step_fraction: f64,
    /// Whether PGD starts from a uniform point inside the epsilon-ball.
    pub pgd_random_start: bool,
    /// Gaussian smoothing kernel side (odd) for TIFGSM.
    pub ti_kernel: usize,
    pub ti_sigma: f64,
    pub ti_momentum: f64,
    pub deepfool_max_iter: usize,
    /// Maximum number of score-oracle calls per sample for Square.
    pub square_budget: usize,
    /// Initial fraction of the image a Square proposal covers.
    pub square_p_init: f64,
}

impl Default for AttackHyper {
    fn default() -> Self {
        AttackHyper {
            steps: 10,
            step_fraction: 0.25,
            pgd_random_start: true,
            ti_kernel: 5,
            ti_sigma: 1.5,
            ti_momentum: 1.0,
            deepfool_max_iter: 50,
            square_budget: 500,
            square_p_init: 0.8,
        }
    }
}

/// One attack and everything needed to run it: the tunable-parameter grid
/// (absent for grayscale and invert) plus fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub grid: Option<ParamGrid>,
    pub hyper: AttackHyper,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, grid: Option<ParamGrid>, hyper: AttackHyper) -> Result<Self> {
        match (kind.param_name(), &grid) {
            (Some(_), Some(g)) => {
                ParamGrid::new(g.min, g.max, g.step)?;
            }
            (Some(p), None) => {
                return Err(Error::Config(format!(
                    "attack {} tunes {p} and needs a parameter grid",
                    kind.name()
                )));
            }
            (None, Some(_)) => {
                return Err(Error::Config(format!(
                    "attack {} takes no parameter but a grid was given",
                    kind.name()
                )));
            }
            (None, None) => {}
        }
        Ok(AttackSpec { kind, grid, hyper })
    }

    /// The spec used throughout the benchmark: default grid for the image
    /// side length and default hyperparameters.
    pub fn standard(kind: AttackKind, image_size: usize) -> Self {
        AttackSpec {
            kind,
            grid: default_grid(kind, image_size),
            hyper: AttackHyper::default(),
        }
    }
}

/// Default tuning grid per attack. Epsilon-style attacks share one grid; the
/// occlusion box is sized relative to the image so the sweep covers the same
/// visual range at any resolution.
pub fn default_grid(kind: AttackKind, image_size: usize) -> Option<ParamGrid> {
    let s = image_size as f64;
    match kind {
        AttackKind::Bim
        | AttackKind::Fgsm
        | AttackKind::Pgd
        | AttackKind::Rfgsm
        | AttackKind::Square
        | AttackKind::Tifgsm => Some(ParamGrid {
            min: 0.01,
            max: 0.30,
            step: 0.01,
        }),
        AttackKind::DeepFool => Some(ParamGrid {
            min: 10.0,
            max: 100.0,
            step: 1.0,
        }),
        AttackKind::BoxBlur => Some(ParamGrid {
            min: 1.0,
            max: 4.0,
            step: 1.0,
        }),
        AttackKind::GaussianNoise => Some(ParamGrid {
            min: 0.01,
            max: 0.20,
            step: 0.01,
        }),
        AttackKind::RandomBlackBox => Some(ParamGrid {
            min: (s / 8.0).round().max(1.0),
            max: (s / 2.0).round(),
            step: (s / 16.0).round().max(1.0),
        }),
        AttackKind::SaltPepper => Some(ParamGrid {
            min: 0.02,
            max: 0.26,
            step: 0.02,
        }),
        AttackKind::Grayscale | AttackKind::Invert => None,
    }
}

/// Result of running one attack over a batch.
#[derive(Debug, Clone)]
pub struct AttackOutput {
    /// Perturbed images, `[B, C, H, W]`, clamped to `[0, 1]`.
    pub adversarial: Tensor<f32>,
    /// Per-sample label-flip knowledge for attacks that track it themselves
    /// (DeepFool, Square); `None` for the rest.
    pub flipped: Option<Vec<bool>>,
    /// Per-sample oracle query counts (Square only).
    pub queries: Option<Vec<usize>>,
}

/// Runs `kind` over a batch with tuned parameter `gamma`, deriving one seed
/// per sample so results do not depend on batch composition order effects.
///
/// `model` is required for mathematical attacks and ignored by the image
/// transformations. `gamma` must be present exactly when the attack has a
/// tunable parameter.
pub fn run_attack(
    kind: AttackKind,
    model: Option<&Network<f32>>,
    x: &Tensor<f32>,
    labels: &[usize],
    gamma: Option<f64>,
    hyper: &AttackHyper,
    seed: u64,
) -> Result<AttackOutput> {
    let [b_n, _, _, _] = x.dims4("run-attack")?;
    if labels.len() != b_n {
        return Err(Error::Eval(format!(
            "attack batch has {} images but {} labels",
            b_n,
            labels.len()
        )));
    }
    match (kind.param_name(), gamma) {
        (Some(p), None) => {
            return Err(Error::Config(format!(
                "attack {} needs its parameter {p}",
                kind.name()
            )));
        }
        (None, Some(_)) => {
            return Err(Error::Config(format!(
                "attack {} takes no parameter",
                kind.name()
            )));
        }
        _ => {}
    }
    let need_model = || {
        model.ok_or_else(|| {
            Error::Config(format!("attack {} requires a model", kind.name()))
        })
    };
    let plain = |adversarial| AttackOutput {
        adversarial,
        flipped: None,
        queries: None,
    };

    match kind {
        AttackKind::Fgsm => {
            let eps = gamma.expect("checked above") as f32;
            Ok(plain(fgsm(need_model()?, x, labels, eps)?))
        }
        AttackKind::Bim => {
            let eps = gamma.expect("checked above") as f32;
            let step = eps * hyper.step_fraction as f32;
            Ok(plain(bim(need_model()?, x, labels, eps, hyper.steps, step)?))
        }
        AttackKind::Pgd => {
            let eps = gamma.expect("checked above") as f32;
            let step = eps * hyper.step_fraction as f32;
            Ok(plain(pgd(
                need_model()?,
                x,
                labels,
                eps,
                hyper.steps,
                step,
                hyper.pgd_random_start,
                derive_seed(seed, &["attack", kind.name()]),
            )?))
        }
        AttackKind::Rfgsm => {
            let eps = gamma.expect("checked above") as f32;
            let step = eps * hyper.step_fraction as f32;
            Ok(plain(rfgsm(
                need_model()?,
                x,
                labels,
                eps,
                hyper.steps,
                step,
                derive_seed(seed, &["attack", kind.name()]),
            )?))
        }
        AttackKind::Tifgsm => {
            let eps = gamma.expect("checked above") as f32;
            let step = eps * hyper.step_fraction as f32;
            Ok(plain(tifgsm(
                need_model()?,
                x,
                labels,
                eps,
                hyper.steps,
                step,
                hyper.ti_kernel,
                hyper.ti_sigma,
                hyper.ti_momentum,
            )?))
        }
        AttackKind::DeepFool => {
            let outcome = deepfool(
                need_model()?,
                x,
                gamma.expect("checked above"),
                hyper.deepfool_max_iter,
            )?;
            Ok(AttackOutput {
                adversarial: outcome.adversarial,
                flipped: Some(outcome.flipped),
                queries: Some(outcome.iterations),
            })
        }
        AttackKind::Square => {
            let eps = gamma.expect("checked above") as f32;
            let net = need_model()?;
            let mut advs = Vec::with_capacity(b_n);
            let mut queries = Vec::with_capacity(b_n);
            let mut flipped = Vec::with_capacity(b_n);
            for b in 0..b_n {
                let sample = x.slice_batch(b)?;
                let mut oracle = |img: &Tensor<f32>| {
                    let batch = stack(&[img])?;
                    let probs = net.predict_proba(&batch)?;
                    Ok(probs.data().to_vec())
                };
                let out = square_attack(
                    &mut oracle,
                    &sample,
                    labels[b],
                    eps,
                    hyper.square_budget,
                    hyper.square_p_init,
                    per_sample_seed(seed, kind, &sample),
                )?;
                advs.push(out.adversarial);
                queries.push(out.queries);
                flipped.push(out.flipped);
            }
            let refs: Vec<&Tensor<f32>> = advs.iter().collect();
            Ok(AttackOutput {
                adversarial: stack(&refs)?,
                flipped: Some(flipped),
                queries: Some(queries),
            })
        }
        AttackKind::BoxBlur => {
            let radius = round_usize(gamma.expect("checked above"), "blur radius")?;
            per_sample(x, |sample| box_blur(sample, radius))
        }
        AttackKind::GaussianNoise => {
            let sigma = gamma.expect("checked above");
            per_sample(x, |sample| {
                gaussian_noise(sample, sigma, per_sample_seed(seed, kind, sample))
            })
        }
        AttackKind::Grayscale => per_sample(x, grayscale),
        AttackKind::Invert => per_sample(x, |sample| Ok(invert(sample))),
        AttackKind::RandomBlackBox => {
            let size = round_usize(gamma.expect("checked above"), "box size")?;
            per_sample(x, |sample| {
                random_black_box(sample, size, per_sample_seed(seed, kind, sample))
            })
        }
        AttackKind::SaltPepper => {
            let amount = gamma.expect("checked above");
            per_sample(x, |sample| {
                salt_pepper(sample, amount, per_sample_seed(seed, kind, sample))
            })
        }
    }
}

/// Seeds per-sample randomness from the image content rather than the batch
/// index, so a sample's perturbation is the same whether it is attacked in a
/// full evaluation batch or in a filtered subset (e.g. one class at a time).
fn per_sample_seed(seed: u64, kind: AttackKind, sample: &Tensor<f32>) -> u64 {
    derive_seed(seed, &["attack", kind.name(), &content_key(sample.data())])
}

/// Short hex digest of a sample's raw bytes.
pub(crate) fn content_key(data: &[f32]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for v in data {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn per_sample(
    x: &Tensor<f32>,
    f: impl Fn(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<AttackOutput> {
    let b_n = x.shape()[0];
    let mut out = Vec::with_capacity(b_n);
    for b in 0..b_n {
        out.push(f(&x.slice_batch(b)?)?);
    }
    let refs: Vec<&Tensor<f32>> = out.iter().collect();
    Ok(AttackOutput {
        adversarial: stack(&refs)?,
        flipped: None,
        queries: None,
    })
}

fn round_usize(v: f64, what: &str) -> Result<usize> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Config(format!("{what} must be a non-negative number, got {v}")));
    }
    Ok(v.round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::LayerSpec;

    fn tiny_net(seed: u64) -> Network<f32> {
        Network::init(
            [3, 8, 8],
            vec![LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }],
            seed,
        )
        .unwrap()
    }

    fn tiny_batch(seed: u64, b: usize) -> Tensor<f32> {
        crate::diff::uniform_pm1_like::<f32>(&[b, 3, 8, 8], seed).map(|v| (v + 1.0) / 2.0)
    }

    #[test]
    fn family_partition_matches_the_mathematical_list() {
        let math: Vec<_> = AttackKind::all()
            .into_iter()
            .filter(|k| k.family() == AttackFamily::Mathematical)
            .collect();
        assert_eq!(math, AttackKind::mathematical().to_vec());
        assert_eq!(AttackKind::all().len(), 13);
        assert_eq!(AttackKind::mathematical().len(), 7);
        assert_eq!(AttackKind::non_mathematical().len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for kind in AttackKind::all() {
            assert_eq!(AttackKind::from_name(kind.name()), Some(kind));
            assert_eq!(kind.name().parse::<AttackKind>().unwrap(), kind);
        }
        assert!(AttackKind::from_name("nope").is_none());
    }

    #[test]
    fn default_grid_point_counts() {
        let count = |k| default_grid(k, 32).unwrap().points().len();
        assert_eq!(count(AttackKind::Fgsm), 30);
        assert_eq!(count(AttackKind::DeepFool), 91);
        assert_eq!(count(AttackKind::BoxBlur), 4);
        assert_eq!(count(AttackKind::GaussianNoise), 20);
        assert_eq!(count(AttackKind::SaltPepper), 13);
        // 32 px: box sizes 4, 6, 8, 10, 12, 14, 16
        assert_eq!(
            default_grid(AttackKind::RandomBlackBox, 32).unwrap().points(),
            vec![4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]
        );
        assert!(default_grid(AttackKind::Grayscale, 32).is_none());
        assert!(default_grid(AttackKind::Invert, 32).is_none());
    }

    #[test]
    fn spec_validation_rejects_bad_grids() {
        let hyper = AttackHyper::default();
        assert!(AttackSpec::new(
            AttackKind::Fgsm,
            Some(ParamGrid { min: 0.3, max: 0.1, step: 0.01 }),
            hyper.clone()
        )
        .is_err());
        assert!(AttackSpec::new(
            AttackKind::Fgsm,
            Some(ParamGrid { min: 0.1, max: 0.3, step: 0.0 }),
            hyper.clone()
        )
        .is_err());
        assert!(AttackSpec::new(AttackKind::Fgsm, None, hyper.clone()).is_err());
        assert!(AttackSpec::new(
            AttackKind::Invert,
            Some(ParamGrid { min: 0.1, max: 0.3, step: 0.1 }),
            hyper.clone()
        )
        .is_err());
        assert!(AttackSpec::new(AttackKind::Invert, None, hyper).is_ok());
    }

    #[test]
    fn run_attack_requires_model_for_mathematical_kinds() {
        let x = tiny_batch(5, 2);
        let hyper = AttackHyper::default();
        for kind in AttackKind::mathematical() {
            let err = run_attack(kind, None, &x, &[0, 1], Some(0.1), &hyper, 7).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{kind}: {err}");
        }
    }

    #[test]
    fn run_attack_enforces_parameter_presence() {
        let x = tiny_batch(6, 2);
        let hyper = AttackHyper::default();
        assert!(run_attack(AttackKind::BoxBlur, None, &x, &[0, 1], None, &hyper, 7).is_err());
        assert!(
            run_attack(AttackKind::Invert, None, &x, &[0, 1], Some(1.0), &hyper, 7).is_err()
        );
        assert!(run_attack(AttackKind::Invert, None, &x, &[0, 1], None, &hyper, 7).is_ok());
    }

    #[test]
    fn run_attack_is_deterministic_per_seed_and_varies_across_seeds() {
        let net = tiny_net(11);
        let x = tiny_batch(12, 3);
        let labels = [0, 1, 0];
        // One PGD step only: with many steps every start marches to the same
        // ball corner on a linear model and the random start washes out.
        let hyper = AttackHyper {
            steps: 1,
            ..AttackHyper::default()
        };
        for kind in [AttackKind::Pgd, AttackKind::Square, AttackKind::SaltPepper] {
            let model = if kind.family() == AttackFamily::Mathematical {
                Some(&net)
            } else {
                None
            };
            let a = run_attack(kind, model, &x, &labels, Some(0.1), &hyper, 41).unwrap();
            let b = run_attack(kind, model, &x, &labels, Some(0.1), &hyper, 41).unwrap();
            let c = run_attack(kind, model, &x, &labels, Some(0.1), &hyper, 42).unwrap();
            assert_eq!(a.adversarial.data(), b.adversarial.data(), "{kind}");
            assert!(
                a.adversarial.data() != c.adversarial.data(),
                "{kind} ignored its seed"
            );
        }
    }

    #[test]
    fn per_sample_outputs_ignore_batch_composition() {
        let net = tiny_net(23);
        let x = tiny_batch(24, 3);
        let labels = [0, 1, 0];
        let hyper = AttackHyper {
            steps: 2,
            square_budget: 15,
            ..AttackHyper::default()
        };
        for kind in [
            AttackKind::Pgd,
            AttackKind::Rfgsm,
            AttackKind::Square,
            AttackKind::GaussianNoise,
            AttackKind::SaltPepper,
            AttackKind::RandomBlackBox,
        ] {
            let model = (kind.family() == AttackFamily::Mathematical).then_some(&net);
            let gamma = if kind == AttackKind::RandomBlackBox { 3.0 } else { 0.1 };
            let full = run_attack(kind, model, &x, &labels, Some(gamma), &hyper, 31).unwrap();
            let solo_batch = stack(&[&x.slice_batch(1).unwrap()]).unwrap();
            let solo =
                run_attack(kind, model, &solo_batch, &labels[1..2], Some(gamma), &hyper, 31)
                    .unwrap();
            assert_eq!(
                full.adversarial.slice_batch(1).unwrap().data(),
                solo.adversarial.slice_batch(0).unwrap().data(),
                "{kind} output depends on batch composition"
            );
        }
    }

    #[test]
    fn every_attack_output_stays_in_range() {
        let net = tiny_net(3);
        let x = tiny_batch(4, 2);
        let labels = [0, 1];
        let mut hyper = AttackHyper::default();
        hyper.steps = 3;
        hyper.square_budget = 20;
        hyper.deepfool_max_iter = 5;
        for kind in AttackKind::all() {
            let model = (kind.family() == AttackFamily::Mathematical).then_some(&net);
            let gamma = kind.param_name().map(|_| match kind {
                AttackKind::DeepFool => 12.0,
                AttackKind::BoxBlur => 2.0,
                AttackKind::RandomBlackBox => 3.0,
                _ => 0.1,
            });
            let out = run_attack(kind, model, &x, &labels, gamma, &hyper, 99).unwrap();
            assert_eq!(out.adversarial.shape(), x.shape(), "{kind}");
            for &v in out.adversarial.data() {
                assert!((0.0..=1.0).contains(&v), "{kind} produced {v}");
            }
        }
    }
}
