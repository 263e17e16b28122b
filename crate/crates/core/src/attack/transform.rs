//! Model-free image corruptions used as the non-mathematical attacks.
//!
//! All operate on a single `[C, H, W]` image in `[0, 1]` and return the same
//! shape. Seeded ones are pure functions of (image, parameter, seed).

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{next_gaussian, rng_from};
use rand::Rng;

/// Replaces each pixel with the mean of a `(2 radius + 1)` square window;
/// indices outside the image clamp to the nearest edge pixel.
pub fn box_blur(x: &Tensor<f32>, radius: usize) -> Result<Tensor<f32>> {
    let [c_n, h, w] = x.dims3("box-blur")?;
    if radius == 0 {
        return Ok(x.clone());
    }
    let r = radius as isize;
    let window = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c_n {
        let src = &x.data()[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut acc = 0.0f64;
                for dy in -r..=r {
                    let yy = (y + dy).clamp(0, h as isize - 1);
                    for dx in -r..=r {
                        let xc = (xx + dx).clamp(0, w as isize - 1);
                        acc += src[(yy * w as isize + xc) as usize] as f64;
                    }
                }
                dst[(y * w as isize + xx) as usize] = (acc / window) as f32;
            }
        }
    }
    Ok(out)
}

/// Adds independent `N(0, sigma^2)` noise per value, then clamps.
pub fn gaussian_noise(x: &Tensor<f32>, sigma: f64, seed: u64) -> Result<Tensor<f32>> {
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    x.dims3("gaussian-noise")?;
    let mut rng = rng_from(seed);
    let data = x
        .data()
        .iter()
        .map(|&v| ((v as f64 + sigma * next_gaussian(&mut rng)) as f32).clamp(0.0, 1.0))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Rec. 601 luminance replicated across the three channels.
pub fn grayscale(x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [c_n, h, w] = x.dims3("grayscale")?;
    if c_n != 3 {
        return Err(Error::shape(
            "grayscale",
            format!("expected 3 channels, got {c_n}"),
        ));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    for i in 0..plane {
        let lum = 0.299 * x.data()[i]
            + 0.587 * x.data()[plane + i]
            + 0.114 * x.data()[2 * plane + i];
        for ch in 0..3 {
            out.data_mut()[ch * plane + i] = lum;
        }
    }
    Ok(out)
}

/// Photographic negative: `1 - x`.
pub fn invert(x: &Tensor<f32>) -> Tensor<f32> {
    x.map(|v| 1.0 - v)
}

/// Zeroes a `size` x `size` square across all channels. The square's center
/// is drawn uniformly from the central half of the image and its position is
/// nudged inward if needed so the full square stays inside the frame.
pub fn random_black_box(x: &Tensor<f32>, size: usize, seed: u64) -> Result<Tensor<f32>> {
    let [c_n, h, w] = x.dims3("random-black-box")?;
    if size > h.min(w) {
        return Err(Error::Config(format!(
            "occlusion box of {size} px does not fit a {h}x{w} image"
        )));
    }
    if size == 0 {
        return Ok(x.clone());
    }
    let mut rng = rng_from(seed);
    let cy = rng.gen_range(h / 4..(3 * h / 4).max(h / 4 + 1));
    let cx = rng.gen_range(w / 4..(3 * w / 4).max(w / 4 + 1));
    let top = cy.saturating_sub(size / 2).min(h - size);
    let left = cx.saturating_sub(size / 2).min(w - size);
    let mut out = x.clone();
    for ch in 0..c_n {
        for y in top..top + size {
            for xx in left..left + size {
                out.data_mut()[(ch * h + y) * w + xx] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Sets `round(amount * H * W)` pixel positions (chosen without replacement)
/// to pure white or pure black across all channels; the white half rounds up.
pub fn salt_pepper(x: &Tensor<f32>, amount: f64, seed: u64) -> Result<Tensor<f32>> {
    let [c_n, h, w] = x.dims3("salt-pepper")?;
    if !(0.0..=1.0).contains(&amount) {
        return Err(Error::Config(format!(
            "salt-pepper amount must be in [0, 1], got {amount}"
        )));
    }
    let count = (amount * (h * w) as f64).round() as usize;
    let mut rng = rng_from(seed);
    let positions = rand::seq::index::sample(&mut rng, h * w, count);
    let salt_n = count - count / 2;
    let mut out = x.clone();
    for (i, pos) in positions.into_iter().enumerate() {
        let value = if i < salt_n { 1.0 } else { 0.0 };
        for ch in 0..c_n {
            out.data_mut()[ch * h * w + pos] = value;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::uniform_pm1_like;

    fn image(seed: u64) -> Tensor<f32> {
        uniform_pm1_like::<f32>(&[3, 12, 12], seed).map(|v| 0.1 + 0.8 * (v + 1.0) / 2.0)
    }

    #[test]
    fn blur_identity_cases_and_hand_window() {
        let x = image(1);
        assert_eq!(box_blur(&x, 0).unwrap().data(), x.data());
        let flat = Tensor::filled(&[3, 5, 5], 0.42f32);
        let blurred = box_blur(&flat, 2).unwrap();
        for &v in blurred.data() {
            assert!((v - 0.42).abs() < 1e-6);
        }
        // Single bright pixel of 9x its neighbors spreads to the window mean.
        let mut spike = Tensor::zeros(&[1, 3, 3]);
        spike.data_mut()[4] = 9.0;
        let b = box_blur(&spike, 1).unwrap();
        assert!((b.data()[4] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn blur_edge_clamping_replicates_border() {
        // 1x1x2 image: each window of radius 1 sees its own pixel twice and
        // the neighbor once (indices clamp onto the 2-pixel row).
        let x = Tensor::new(vec![1, 1, 2], vec![0.0f32, 0.9]).unwrap();
        let b = box_blur(&x, 1).unwrap();
        assert!((b.data()[0] - 0.3).abs() < 1e-6);
        assert!((b.data()[1] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn noise_is_seeded_and_zero_sigma_is_identity() {
        let x = image(3);
        assert_eq!(gaussian_noise(&x, 0.0, 7).unwrap().data(), x.data());
        let a = gaussian_noise(&x, 0.05, 7).unwrap();
        let b = gaussian_noise(&x, 0.05, 7).unwrap();
        let c = gaussian_noise(&x, 0.05, 8).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data() != c.data());
    }

    #[test]
    fn noise_mean_shift_is_near_zero() {
        let flat = Tensor::filled(&[3, 32, 32], 0.5f32);
        let sigma = 0.05;
        let noised = gaussian_noise(&flat, sigma, 11).unwrap();
        let n = flat.len() as f64;
        let mean_shift: f64 = noised
            .data()
            .iter()
            .zip(flat.data())
            .map(|(&a, &b)| (a - b) as f64)
            .sum::<f64>()
            / n;
        assert!(mean_shift.abs() < 4.0 * sigma / n.sqrt());
    }

    #[test]
    fn grayscale_coefficients_and_idempotence() {
        let mut red = Tensor::zeros(&[3, 2, 2]);
        for i in 0..4 {
            red.data_mut()[i] = 1.0;
        }
        let g = grayscale(&red).unwrap();
        for ch in 0..3 {
            for i in 0..4 {
                assert!((g.data()[ch * 4 + i] - 0.299).abs() < 1e-6);
            }
        }
        let again = grayscale(&g).unwrap();
        assert!(again.max_abs_diff(&g) < 1e-6);
        let plane = 4;
        for i in 0..plane {
            assert_eq!(g.data()[i], g.data()[plane + i]);
            assert_eq!(g.data()[i], g.data()[2 * plane + i]);
        }
    }

    #[test]
    fn invert_is_an_involution_with_fixed_midpoint() {
        let x = image(9);
        let twice = invert(&invert(&x));
        assert!(twice.max_abs_diff(&x) < 1e-6);
        let mid = Tensor::filled(&[3, 2, 2], 0.5f32);
        assert_eq!(invert(&mid).data(), mid.data());
        let black = Tensor::zeros(&[3, 2, 2]);
        assert_eq!(invert(&black).data(), Tensor::filled(&[3, 2, 2], 1.0f32).data());
    }

    #[test]
    fn black_box_zero_count_and_seeding() {
        let x = image(11).map(|v| v.max(0.05)); // keep every pixel nonzero
        assert_eq!(random_black_box(&x, 0, 3).unwrap().data(), x.data());
        let boxed = random_black_box(&x, 4, 3).unwrap();
        let zeros = boxed.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 4 * 4 * 3);
        let b = random_black_box(&x, 4, 3).unwrap();
        assert_eq!(boxed.data(), b.data());
        let c = random_black_box(&x, 4, 4).unwrap();
        assert!(boxed.data() != c.data());
        assert!(random_black_box(&x, 13, 3).is_err());
    }

    #[test]
    fn black_box_lands_in_the_central_half() {
        let x = Tensor::filled(&[1, 16, 16], 1.0f32);
        for seed in 0..20 {
            let boxed = random_black_box(&x, 2, seed).unwrap();
            for y in 0..16 {
                for xx in 0..16 {
                    if boxed.data()[y * 16 + xx] == 0.0 {
                        // Box center stays within [4, 12); with size 2 every
                        // zero pixel lies in [3, 13).
                        assert!((3..13).contains(&y), "row {y}");
                        assert!((3..13).contains(&xx), "col {xx}");
                    }
                }
            }
        }
    }

    #[test]
    fn salt_pepper_counts_and_extremes() {
        let x = image(13).map(|v| v.clamp(0.05, 0.95));
        let h_w = 12 * 12;
        for amount in [0.0, 0.1, 0.25] {
            let o = salt_pepper(&x, amount, 5).unwrap();
            let expected = (amount * h_w as f64).round() as usize;
            let changed = (0..h_w)
                .filter(|&i| (0..3).any(|ch| o.data()[ch * h_w + i] != x.data()[ch * h_w + i]))
                .count();
            assert_eq!(changed, expected);
            // Changed positions are fully white or fully black on every channel.
            for i in 0..h_w {
                if o.data()[i] != x.data()[i] {
                    for ch in 0..3 {
                        let v = o.data()[ch * h_w + i];
                        assert!(v == 0.0 || v == 1.0);
                    }
                }
            }
        }
        let all = salt_pepper(&x, 1.0, 5).unwrap();
        for &v in all.data() {
            assert!(v == 0.0 || v == 1.0);
        }
        let salt = all.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(salt, (h_w - h_w / 2) * 3);
        assert!(salt_pepper(&x, 1.5, 5).is_err());
        let a = salt_pepper(&x, 0.1, 5).unwrap();
        let b = salt_pepper(&x, 0.1, 5).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
