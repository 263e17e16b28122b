//! Dataset persistence: a JSON manifest plus a content-addressed PNG cache.
//!
//! Because tensors are quantized to the 1/255 grid, the PNG round trip is
//! bit-exact and the manifest hashes stay stable across save/load cycles.

use std::collections::BTreeMap;
use std::path::Path;

use super::{DatasetProvenance, DatasetSplit, Sample};
use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(serde::Serialize, serde::Deserialize)]
struct ManifestEntry {
    hash: String,
    label: usize,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    provenance: DatasetProvenance,
    train: Vec<ManifestEntry>,
    validation: Vec<ManifestEntry>,
    test: Vec<ManifestEntry>,
}

pub(crate) fn to_rgb8(image: &Tensor<f32>) -> Result<image::RgbImage> {
    let [c, h, w] = image.dims3("png-export")?;
    if c != 3 {
        return Err(Error::shape(
            "png-export",
            format!("expected 3 channels, got {c}"),
        ));
    }
    let plane = h * w;
    let data = image.data();
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = y as usize * w + x as usize;
        image::Rgb(std::array::from_fn(|ch| {
            (data[ch * plane + at] * 255.0).round() as u8
        }))
    }))
}

fn from_rgb8(rgb: &image::RgbImage) -> Tensor<f32> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px.0[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("buffer sized to shape")
}

/// Writes `manifest.json` plus `images/<hash>.png` for every distinct image.
pub fn save_dataset(split: &DatasetSplit, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let mut unique: BTreeMap<String, &Sample> = BTreeMap::new();
    let entries = |samples: &[Sample]| -> Vec<ManifestEntry> {
        samples
            .iter()
            .map(|s| ManifestEntry {
                hash: s.content_hash(),
                label: s.label,
            })
            .collect()
    };
    let manifest = Manifest {
        provenance: split.provenance.clone(),
        train: entries(&split.train),
        validation: entries(&split.validation),
        test: entries(&split.test),
    };
    for s in split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
    {
        unique.entry(s.content_hash()).or_insert(s);
    }
    for (hash, sample) in unique {
        let path = images_dir.join(format!("{hash}.png"));
        if !path.exists() {
            to_rgb8(&sample.image)?
                .save(&path)
                .map_err(|e| Error::Ingest {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
        }
    }
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Loads a dataset saved by [`save_dataset`], verifying content hashes.
pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let manifest_path = dir.join("manifest.json");
    let json = std::fs::read_to_string(&manifest_path).map_err(|e| Error::Ingest {
        path: manifest_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_str(&json)?;
    let images_dir = dir.join("images");

    let load_block = |entries: &[ManifestEntry]| -> Result<Vec<Sample>> {
        entries
            .iter()
            .map(|e| {
                let path = images_dir.join(format!("{}.png", e.hash));
                let decoded = image::open(&path).map_err(|err| Error::Ingest {
                    path: path.display().to_string(),
                    detail: err.to_string(),
                })?;
                let sample = Sample {
                    image: from_rgb8(&decoded.to_rgb8()),
                    label: e.label,
                };
                if sample.content_hash() != e.hash {
                    return Err(Error::Ingest {
                        path: path.display().to_string(),
                        detail: "content hash mismatch".to_string(),
                    });
                }
                Ok(sample)
            })
            .collect()
    };

    Ok(DatasetSplit {
        train: load_block(&manifest.train)?,
        validation: load_block(&manifest.validation)?,
        test: load_block(&manifest.test)?,
        provenance: manifest.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, split, SourceId, SourceSpec, TaskId, TaskSpec};

    fn tiny_split() -> DatasetSplit {
        let spec = TaskSpec::new(TaskId::Easy, 16).unwrap();
        let source = SourceSpec::builtin(SourceId::A);
        let samples = generate_dataset(&spec, &source, 10, 3).unwrap();
        let parts = split(&samples, [0.7, 0.1, 0.2], 3).unwrap();
        DatasetSplit {
            train: parts.train,
            validation: parts.validation,
            test: parts.test,
            provenance: DatasetProvenance {
                task: TaskId::Easy,
                source: SourceId::A,
                seed: 3,
                image_size: 16,
                origin: "generated".to_string(),
            },
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_split();
        save_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.train.len(), ds.train.len());
        assert_eq!(loaded.validation.len(), ds.validation.len());
        assert_eq!(loaded.test.len(), ds.test.len());
        for (a, b) in ds.train.iter().zip(&loaded.train) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.image.data(), b.image.data());
        }
        assert_eq!(loaded.provenance.task, TaskId::Easy);
        assert_eq!(loaded.provenance.seed, 3);
    }

    #[test]
    fn tampered_image_fails_hash_verification() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_split();
        save_dataset(&ds, dir.path()).unwrap();
        // Overwrite one cached PNG with a different image.
        let images: Vec<_> = std::fs::read_dir(dir.path().join("images"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        image::RgbImage::from_pixel(16, 16, image::Rgb([1, 2, 3]))
            .save(&images[0])
            .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("hash mismatch"), "{err}");
    }

    #[test]
    fn missing_manifest_is_an_ingest_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Ingest { .. })
        ));
    }
}
