//! On-disk form of a batch of adversarial examples: paired PNGs plus a JSON
//! manifest carrying provenance and per-sample similarity scores.
//!
//! The PNG export rounds float pixels to the 8-bit grid, so the files are a
//! human-inspectable record rather than a lossless store; similarity scores
//! in the manifest are computed on the float tensors before export.

use crate::attack::AttackHyper;
use crate::data::manifest::to_rgb8;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::perceptual::{ssim, SsimConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Where a set of adversarial examples came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvProvenance {
    pub attack: String,
    /// Tuned parameter value, absent for parameter-free attacks.
    pub parameter: Option<f64>,
    /// Surrogate model id (mathematical attacks) or dataset key
    /// (transformations).
    pub source: String,
    pub seed: u64,
}

/// One original/perturbed pair with its label and structural similarity.
#[derive(Debug, Clone)]
pub struct AdvExample {
    pub original: Tensor<f32>,
    pub adversarial: Tensor<f32>,
    pub label: usize,
    pub ssim: f64,
}

impl AdvExample {
    /// Builds the pair, computing similarity with `cfg` and enforcing the
    /// shape/range contract on the perturbed image.
    pub fn new(
        original: Tensor<f32>,
        adversarial: Tensor<f32>,
        label: usize,
        cfg: &SsimConfig,
    ) -> Result<Self> {
        if original.shape() != adversarial.shape() {
            return Err(Error::shape(
                "adversarial-pair",
                format!(
                    "original {:?} vs perturbed {:?}",
                    original.shape(),
                    adversarial.shape()
                ),
            ));
        }
        if adversarial.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Eval(
                "perturbed image leaves the [0, 1] range".to_string(),
            ));
        }
        let score = ssim(&original, &adversarial, cfg)?;
        Ok(AdvExample {
            original,
            adversarial,
            label,
            ssim: score,
        })
    }
}

/// A labelled batch of adversarial pairs with shared provenance.
#[derive(Debug, Clone)]
pub struct AdversarialSet {
    pub provenance: AdvProvenance,
    pub hyper: AttackHyper,
    pub items: Vec<AdvExample>,
}

#[derive(Serialize, Deserialize)]
struct SetManifest {
    provenance: AdvProvenance,
    hyper: AttackHyper,
    mean_ssim: f64,
    items: Vec<ItemRecord>,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    index: usize,
    label: usize,
    ssim: f64,
    original: String,
    adversarial: String,
}

impl AdversarialSet {
    pub fn new(
        provenance: AdvProvenance,
        hyper: AttackHyper,
        items: Vec<AdvExample>,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyEval("adversarial set has no items".to_string()));
        }
        Ok(AdversarialSet {
            provenance,
            hyper,
            items,
        })
    }

    pub fn mean_ssim(&self) -> f64 {
        self.items.iter().map(|i| i.ssim).sum::<f64>() / self.items.len() as f64
    }

    /// Writes `orig_NNNN.png` / `adv_NNNN.png` pairs and `manifest.json`
    /// into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut records = Vec::with_capacity(self.items.len());
        for (index, item) in self.items.iter().enumerate() {
            let orig_name = format!("orig_{index:04}.png");
            let adv_name = format!("adv_{index:04}.png");
            save_png(&item.original, &dir.join(&orig_name))?;
            save_png(&item.adversarial, &dir.join(&adv_name))?;
            records.push(ItemRecord {
                index,
                label: item.label,
                ssim: item.ssim,
                original: orig_name,
                adversarial: adv_name,
            });
        }
        let manifest = SetManifest {
            provenance: self.provenance.clone(),
            hyper: self.hyper.clone(),
            mean_ssim: self.mean_ssim(),
            items: records,
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

fn save_png(image: &Tensor<f32>, path: &Path) -> Result<()> {
    to_rgb8(image)?
        .save(path)
        .map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
}
