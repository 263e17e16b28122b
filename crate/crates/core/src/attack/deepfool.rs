//! Minimal-perturbation boundary attack for binary classifiers.
//!
//! Each iteration linearizes the logit difference around the current point
//! and takes the Newton step onto the implied hyperplane; the accumulated
//! perturbation is scaled by `1 + overshoot` to push past the boundary.
//! The attack targets the model's own prediction on the clean image, so it
//! needs no labels.

use crate::diff::{argmax_row, stack, Network, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DeepFoolOutcome {
    /// Perturbed images, `[B, C, H, W]`, clamped to `[0, 1]`.
    pub adversarial: Tensor<f32>,
    /// Whether the prediction actually flipped within the iteration budget.
    pub flipped: Vec<bool>,
    /// Newton steps taken per sample (0 if the clean image was already past
    /// the boundary).
    pub iterations: Vec<usize>,
}

pub fn deepfool(
    net: &Network<f32>,
    x: &Tensor<f32>,
    overshoot: f64,
    max_iter: usize,
) -> Result<DeepFoolOutcome> {
    let [b_n, _, _, _] = x.dims4("deepfool")?;
    if max_iter == 0 {
        return Err(Error::Config("deepfool needs max_iter >= 1".to_string()));
    }
    if !(overshoot >= 0.0) {
        return Err(Error::Config(format!(
            "deepfool overshoot must be >= 0, got {overshoot}"
        )));
    }

    let mut advs = Vec::with_capacity(b_n);
    let mut flipped = Vec::with_capacity(b_n);
    let mut iterations = Vec::with_capacity(b_n);
    for b in 0..b_n {
        let sample = stack(&[&x.slice_batch(b)?])?;
        let (adv, flip, iters) = attack_one(net, &sample, overshoot, max_iter)?;
        advs.push(adv.slice_batch(0)?);
        flipped.push(flip);
        iterations.push(iters);
    }
    let refs: Vec<&Tensor<f32>> = advs.iter().collect();
    Ok(DeepFoolOutcome {
        adversarial: stack(&refs)?,
        flipped,
        iterations,
    })
}

/// Runs the search for one `[1, C, H, W]` sample. Returns the clamped
/// adversarial image, the flip flag, and the step count.
fn attack_one(
    net: &Network<f32>,
    x0: &Tensor<f32>,
    overshoot: f64,
    max_iter: usize,
) -> Result<(Tensor<f32>, bool, usize)> {
    let factor = (1.0 + overshoot) as f32;
    let mut r_acc = Tensor::zeros(x0.shape());
    let mut flipped = false;
    let mut iters = 0;

    let clean_logits = net.forward_logits(x0)?;
    let k_n = clean_logits.shape()[1];
    if k_n != 2 {
        return Err(Error::Config(format!(
            "deepfool handles binary classifiers, model has {k_n} classes"
        )));
    }
    let orig = argmax_row(&clean_logits.data()[..k_n]);
    let target = 1 - orig;

    for it in 0..=max_iter {
        // Working point: clean image plus the overshot accumulated step.
        // Clamping happens only on the returned image so the geometry of the
        // search is not distorted near the pixel-range walls.
        let cur = x0.zip_map(&r_acc, "deepfool-step", |xv, rv| xv + factor * rv)?;

        let mut tape = Tape::new();
        let fwd = net.forward_taped(&mut tape, cur, true, false)?;
        let logits = tape.value(fwd.logits);
        if argmax_row(&logits.data()[..k_n]) != orig {
            flipped = true;
            break;
        }
        if it == max_iter {
            break;
        }

        // d = z_target - z_orig is negative while the original class wins;
        // the Newton step onto the hyperplane {d = 0} is (|d| / ||g||^2) g.
        let margin = tape.logit_margin(fwd.logits, target, orig)?;
        let d = tape.value(margin).data()[0] as f64;
        let mut grads = tape.backward(margin)?;
        let g = grads
            .take(fwd.input)
            .ok_or_else(|| Error::Eval("deepfool margin has no input gradient".to_string()))?;
        let g_norm2: f64 = g.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        if g_norm2 < 1e-20 {
            // Flat margin: nothing to follow (e.g. a constant model).
            break;
        }
        // Small nudge keeps progress when d is exactly 0 (tie at the
        // boundary with the argmax still favoring the original class).
        let scale = ((-d) + 1e-6) / g_norm2;
        for (r, &gv) in r_acc.data_mut().iter_mut().zip(g.data()) {
            *r += (scale * gv as f64) as f32;
        }
        iters = it + 1;
    }

    let adv = x0
        .zip_map(&r_acc, "deepfool-final", |xv, rv| xv + factor * rv)?
        .clamp01();
    Ok((adv, flipped, iters))
}
