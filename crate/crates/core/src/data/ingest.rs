//! Folder ingestion: one subdirectory per class, any decodable image format,
//! normalized to RGB at the task's image size.

use std::collections::HashSet;
use std::path::Path;

use image::imageops::FilterType;
use rand::seq::SliceRandom;

use super::{quantize255, Sample, TaskSpec};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Loads a class-per-subdirectory image folder.
///
/// Class subdirectories take their names from the task's class list; files
/// are visited in name order, decoded, converted to RGB, resized to the
/// task's square size with a triangle filter, and quantized to the 1/255
/// grid. Any unreadable or undecodable file is an error naming that file.
pub fn ingest_folder(dir: &Path, spec: &TaskSpec) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (label, class_name) in spec.task.class_names().iter().enumerate() {
        let class_dir = dir.join(class_name);
        if !class_dir.is_dir() {
            return Err(Error::EmptyClass(format!(
                "{}: missing class directory {class_name}",
                dir.display()
            )));
        }
        let mut files: Vec<_> = std::fs::read_dir(&class_dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::EmptyClass(format!(
                "{}: no files in class directory {class_name}",
                dir.display()
            )));
        }
        for path in files {
            let decoded = image::open(&path).map_err(|e| Error::Ingest {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            let size = spec.image_size as u32;
            let rgb = image::imageops::resize(&decoded.to_rgb8(), size, size, FilterType::Triangle);
            let mut data = vec![0.0f32; 3 * spec.image_size * spec.image_size];
            let plane = spec.image_size * spec.image_size;
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * plane + i] = px.0[c] as f32 / 255.0;
                }
            }
            let image = quantize255(
                &Tensor::new(vec![3, spec.image_size, spec.image_size], data)
                    .expect("buffer sized to shape"),
            );
            out.push(Sample { image, label });
        }
    }
    Ok(out)
}

/// Drops samples whose pixel content duplicates an earlier sample.
/// Returns the survivors (original order) and the number removed.
pub fn dedup(samples: Vec<Sample>) -> (Vec<Sample>, usize) {
    let mut seen = HashSet::new();
    let before = samples.len();
    let kept: Vec<Sample> = samples
        .into_iter()
        .filter(|s| seen.insert(s.content_hash()))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Seeded subsampling to equal per-class counts, class 0 first.
///
/// `per_class` defaults to the smaller class size. Classes with fewer than
/// `per_class` samples are an error.
pub fn select_equal(
    samples: &[Sample],
    per_class: Option<usize>,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in samples.iter().enumerate() {
        if s.label > 1 {
            return Err(Error::Split(format!(
                "label {} outside the binary label set",
                s.label
            )));
        }
        by_class[s.label].push(i);
    }
    let target = per_class.unwrap_or(by_class[0].len().min(by_class[1].len()));
    if target == 0 {
        return Err(Error::EmptyClass(
            "selection target of zero samples per class".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(2 * target);
    for (class, indices) in by_class.iter().enumerate() {
        if indices.len() < target {
            return Err(Error::EmptyClass(format!(
                "class {class} has {} samples, {target} requested",
                indices.len()
            )));
        }
        let mut order = indices.clone();
        let mut rng = rng_from(derive_seed(seed, &["select", &class.to_string()]));
        order.shuffle(&mut rng);
        let mut chosen: Vec<usize> = order[..target].to_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| samples[i].clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskId;

    fn write_png(path: &Path, w: u32, h: u32, shade: u8) {
        let img = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([shade, (x % 256) as u8, (y % 256) as u8])
        });
        img.save(path).unwrap();
    }

    fn fixture_spec() -> TaskSpec {
        TaskSpec::new(TaskId::Easy, 16).unwrap()
    }

    #[test]
    fn ingests_resizes_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let circles = dir.path().join("circle");
        let squares = dir.path().join("square");
        std::fs::create_dir_all(&circles).unwrap();
        std::fs::create_dir_all(&squares).unwrap();
        write_png(&circles.join("a.png"), 40, 30, 10);
        write_png(&circles.join("b.png"), 16, 16, 20);
        write_png(&squares.join("z.png"), 8, 8, 200);
        // A grayscale image must ingest as replicated RGB.
        image::GrayImage::from_pixel(20, 20, image::Luma([128]))
            .save(squares.join("gray.png"))
            .unwrap();

        let samples = ingest_folder(dir.path(), &fixture_spec()).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(
            samples.iter().map(|s| s.label).collect::<Vec<_>>(),
            vec![0, 0, 1, 1]
        );
        for s in &samples {
            assert_eq!(s.image.shape(), &[3, 16, 16]);
            for &v in s.image.data() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        // Grayscale file sorts before z.png and has equal channels.
        let gray = &samples[2].image;
        let plane = 16 * 16;
        assert_eq!(gray.data()[..plane], gray.data()[plane..2 * plane]);
    }

    #[test]
    fn undecodable_file_is_an_error_naming_it() {
        let dir = tempfile::tempdir().unwrap();
        let circles = dir.path().join("circle");
        let squares = dir.path().join("square");
        std::fs::create_dir_all(&circles).unwrap();
        std::fs::create_dir_all(&squares).unwrap();
        write_png(&circles.join("ok.png"), 8, 8, 1);
        std::fs::write(squares.join("broken.png"), b"not a png").unwrap();
        let err = ingest_folder(dir.path(), &fixture_spec()).unwrap_err();
        assert!(err.to_string().contains("broken.png"), "{err}");
    }

    #[test]
    fn missing_class_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("circle")).unwrap();
        let err = ingest_folder(dir.path(), &fixture_spec()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(_)));
    }

    #[test]
    fn empty_class_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("circle")).unwrap();
        std::fs::create_dir_all(dir.path().join("square")).unwrap();
        write_png(&dir.path().join("circle").join("a.png"), 8, 8, 3);
        let err = ingest_folder(dir.path(), &fixture_spec()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(_)));
    }

    #[test]
    fn dedup_drops_identical_pixels_only() {
        let dir = tempfile::tempdir().unwrap();
        let circles = dir.path().join("circle");
        let squares = dir.path().join("square");
        std::fs::create_dir_all(&circles).unwrap();
        std::fs::create_dir_all(&squares).unwrap();
        write_png(&circles.join("a.png"), 16, 16, 10);
        write_png(&circles.join("dup_of_a.png"), 16, 16, 10);
        write_png(&circles.join("c.png"), 16, 16, 30);
        write_png(&squares.join("z.png"), 16, 16, 200);
        let samples = ingest_folder(dir.path(), &fixture_spec()).unwrap();
        let (kept, removed) = dedup(samples);
        assert_eq!(removed, 1);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn select_equal_balances_classes_deterministically() {
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(Sample {
                image: Tensor::filled(&[1, 1, 1], i as f32 / 255.0),
                label: 0,
            });
        }
        for i in 0..6 {
            samples.push(Sample {
                image: Tensor::filled(&[1, 1, 1], (100 + i) as f32 / 255.0),
                label: 1,
            });
        }
        let picked = select_equal(&samples, None, 3).unwrap();
        assert_eq!(picked.len(), 12);
        assert_eq!(picked.iter().filter(|s| s.label == 0).count(), 6);
        let again = select_equal(&samples, None, 3).unwrap();
        for (a, b) in picked.iter().zip(&again) {
            assert_eq!(a.image.data(), b.image.data());
        }
        assert!(select_equal(&samples, Some(7), 3).is_err());
        let four = select_equal(&samples, Some(4), 3).unwrap();
        assert_eq!(four.len(), 8);
    }
}
