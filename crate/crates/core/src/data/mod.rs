//! Dataset synthesis, ingestion, splitting, and class-imbalance handling.
//!
//! Three binary tasks of increasing difficulty are rendered procedurally in
//! two visual styles (source A and source B), standing in for the same task
//! photographed under two different collection pipelines. Images are
//! `[3, size, size]` tensors in `[0, 1]`, quantized to the 1/255 grid so the
//! PNG cache round-trips bit-exactly.

mod gen;
mod ingest;
pub(crate) mod manifest;
mod split;

pub use gen::{generate_dataset, render_image};
pub use ingest::{dedup, ingest_folder, select_equal};
pub use manifest::{load_dataset, save_dataset};
pub use split::{rebalance, rebalance_counts, split, SplitParts};

use sha2::{Digest, Sha256};

use crate::diff::Tensor;
use crate::error::{Error, Result};

/// One of the three synthetic binary classification tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Easy,
    Medium,
    Hard,
}

impl TaskId {
    pub fn all() -> [TaskId; 3] {
        [TaskId::Easy, TaskId::Medium, TaskId::Hard]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::Easy => "easy",
            TaskId::Medium => "medium",
            TaskId::Hard => "hard",
        }
    }

    /// Class names, class 0 first. Class 0 is the designated minority class
    /// under imbalanced training distributions.
    pub fn class_names(&self) -> [&'static str; 2] {
        match self {
            TaskId::Easy => ["circle", "square"],
            TaskId::Medium => ["blob", "tailed-blob"],
            TaskId::Hard => ["coarse", "fine"],
        }
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(TaskId::Easy),
            "medium" => Ok(TaskId::Medium),
            "hard" => Ok(TaskId::Hard),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the two rendering pipelines produced a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum SourceId {
    A,
    B,
}

impl SourceId {
    pub fn all() -> [SourceId; 2] {
        [SourceId::A, SourceId::B]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceId::A => "A",
            SourceId::B => "B",
        }
    }
}

impl std::str::FromStr for SourceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(SourceId::A),
            "B" | "b" => Ok(SourceId::B),
            other => Err(Error::Config(format!("unknown source {other:?}"))),
        }
    }
}

impl std::fmt::Display for SourceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class-balance level of a training set: the minority share of the
/// training distribution, expressed as minority:majority parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceLevel {
    /// 50/50
    Balanced,
    /// 40/60
    Weak,
    /// 30/70
    Medium,
    /// 20/80
    Strong,
}

impl BalanceLevel {
    pub fn all() -> [BalanceLevel; 4] {
        [
            BalanceLevel::Balanced,
            BalanceLevel::Weak,
            BalanceLevel::Medium,
            BalanceLevel::Strong,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BalanceLevel::Balanced => "balanced",
            BalanceLevel::Weak => "weak",
            BalanceLevel::Medium => "medium",
            BalanceLevel::Strong => "strong",
        }
    }

    /// Minority fraction of the training distribution.
    pub fn minority_fraction(&self) -> f64 {
        let (n, d) = self.ratio();
        n as f64 / (n + d) as f64
    }

    /// Exact minority:majority ratio `p : (1 - p)` as integers.
    pub fn ratio(&self) -> (u64, u64) {
        match self {
            BalanceLevel::Balanced => (1, 1),
            BalanceLevel::Weak => (2, 3),
            BalanceLevel::Medium => (3, 7),
            BalanceLevel::Strong => (1, 4),
        }
    }
}

impl std::str::FromStr for BalanceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(BalanceLevel::Balanced),
            "weak" => Ok(BalanceLevel::Weak),
            "medium" => Ok(BalanceLevel::Medium),
            "strong" => Ok(BalanceLevel::Strong),
            other => Err(Error::Config(format!("unknown balance level {other:?}"))),
        }
    }
}

impl std::fmt::Display for BalanceLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task plus image geometry.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TaskSpec {
    pub task: TaskId,
    pub image_size: usize,
}

impl TaskSpec {
    pub fn new(task: TaskId, image_size: usize) -> Result<Self> {
        if image_size < 16 {
            return Err(Error::Config(format!(
                "image size {image_size} below the supported minimum of 16"
            )));
        }
        Ok(TaskSpec { task, image_size })
    }
}

/// Rendering style parameters for one source pipeline.
///
/// The built-in A and B styles differ in every field, which is what makes a
/// cross-source model transfer lossy.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StyleParams {
    /// Mean background luminance in `[0, 1]`.
    pub background_level: f64,
    /// Amplitude of the background value-noise texture.
    pub background_texture: f64,
    /// Strength of per-image random channel tinting.
    pub color_jitter: f64,
    /// Expected count of distractor dots per 32 pixels of side length.
    pub clutter_density: f64,
    /// Outline thickness multiplier for drawn shapes.
    pub stroke_scale: f64,
    /// Standard deviation of per-pixel sensor noise.
    pub noise_level: f64,
}

/// A source pipeline: identity plus rendering style.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SourceSpec {
    pub source: SourceId,
    pub style: StyleParams,
}

impl SourceSpec {
    /// The built-in style table.
    pub fn builtin(source: SourceId) -> SourceSpec {
        let style = match source {
            SourceId::A => StyleParams {
                background_level: 0.15,
                background_texture: 0.06,
                color_jitter: 0.10,
                clutter_density: 1.2,
                stroke_scale: 1.0,
                noise_level: 0.02,
            },
            SourceId::B => StyleParams {
                background_level: 0.72,
                background_texture: 0.16,
                color_jitter: 0.30,
                clutter_density: 3.5,
                stroke_scale: 1.8,
                noise_level: 0.05,
            },
        };
        SourceSpec { source, style }
    }
}

/// A labeled image.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub label: usize,
}

impl Sample {
    /// Content hash of the pixel grid (shape header plus 8-bit pixel bytes).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for &d in self.image.shape() {
            hasher.update((d as u32).to_le_bytes());
        }
        for &v in self.image.data() {
            hasher.update([(v * 255.0).round() as u8]);
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Where a dataset came from and how to regenerate it.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetProvenance {
    pub task: TaskId,
    pub source: SourceId,
    pub seed: u64,
    pub image_size: usize,
    /// `"generated"` or the ingested folder path.
    pub origin: String,
}

/// A dataset partitioned into train/validation/test.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub provenance: DatasetProvenance,
}

impl DatasetSplit {
    pub fn total_len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Rounds every element onto the 1/255 grid used by 8-bit image files.
pub(crate) fn quantize255(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}
