//! On-disk model registry: binary checkpoints plus a JSON index.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::metrics::Metrics;
use super::train::{ModelProvenance, ModelRecord};
use crate::diff::{checkpoint, Network};
use crate::error::{Error, Result};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RegistryEntry {
    pub provenance: ModelProvenance,
    pub image_size: usize,
    pub param_count: usize,
    pub val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub baseline: Option<Metrics>,
    /// Checkpoint path relative to the registry root.
    pub checkpoint: String,
    /// SHA-256 of the checkpoint file.
    pub checkpoint_sha: String,
}

/// Directory of trained models: `index.json` plus `checkpoints/<id>.dmb`.
pub struct ModelRegistry {
    root: PathBuf,
}

impl ModelRegistry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("checkpoints"))?;
        Ok(ModelRegistry { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn read_index(&self) -> Result<BTreeMap<String, RegistryEntry>> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let json = std::fs::read_to_string(&path)?;
        Ok(serde_json::from_str(&json)?)
    }

    fn write_index(&self, index: &BTreeMap<String, RegistryEntry>) -> Result<()> {
        let json = serde_json::to_string_pretty(index)?;
        std::fs::write(self.index_path(), json)?;
        Ok(())
    }

    /// Persists a record, overwriting any previous model with the same id.
    pub fn save(&self, record: &ModelRecord) -> Result<()> {
        let id = record.provenance.id();
        let rel = format!("checkpoints/{id}.dmb");
        let path = self.root.join(&rel);
        checkpoint::save_params(record.network.params(), &path)?;
        let bytes = std::fs::read(&path)?;
        let sha: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let entry = RegistryEntry {
            provenance: record.provenance.clone(),
            image_size: record.network.input_shape()[1],
            param_count: record.network.param_count(),
            val_f1: record.val_f1,
            best_epoch: record.best_epoch,
            epochs_run: record.epochs_run,
            baseline: record.baseline,
            checkpoint: rel,
            checkpoint_sha: sha,
        };
        let mut index = self.read_index()?;
        index.insert(id, entry);
        self.write_index(&index)
    }

    /// All model ids in the registry, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        Ok(self.read_index()?.into_keys().collect())
    }

    pub fn entry(&self, id: &str) -> Result<RegistryEntry> {
        self.read_index()?
            .remove(id)
            .ok_or_else(|| Error::Registry(format!("no model {id} in {}", self.root.display())))
    }

    /// Loads a model back into memory, validating the checkpoint against
    /// the recorded architecture.
    pub fn load(&self, id: &str) -> Result<ModelRecord> {
        let entry = self.entry(id)?;
        let params = checkpoint::load_params(&self.root.join(&entry.checkpoint))?;
        let size = entry.image_size;
        let network =
            Network::from_parameters([3, size, size], entry.provenance.arch.layers(), params)?;
        if network.param_count() != entry.param_count {
            return Err(Error::Registry(format!(
                "model {id}: checkpoint has {} parameters, index says {}",
                network.param_count(),
                entry.param_count
            )));
        }
        Ok(ModelRecord {
            provenance: entry.provenance,
            network,
            val_f1: entry.val_f1,
            best_epoch: entry.best_epoch,
            epochs_run: entry.epochs_run,
            baseline: entry.baseline,
        })
    }

    pub fn load_all(&self) -> Result<Vec<ModelRecord>> {
        self.ids()?.iter().map(|id| self.load(id)).collect()
    }
}
