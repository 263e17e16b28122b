//! Gradient-sign attacks: FGSM and its iterative variants.
//!
//! All five run the same elementwise ascent step ([`ascend_project`]):
//! add `step * sign(gradient)`, project back into the epsilon-ball around
//! the original image, clamp to `[0, 1]`. Because the step is shared code,
//! the degeneracy identities between the attacks (single-step BIM and PGD
//! collapse to FGSM; TIFGSM with a delta kernel and zero momentum collapses
//! to BIM) hold bit-wise rather than approximately.
//!
//! The loss is always softmax cross-entropy against the true labels.

use crate::diff::{grad_wrt_input, Network, Tensor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, next_gaussian, rng_from};
use rand::Rng;

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_batch(x: &Tensor<f32>, labels: &[usize], eps: f32) -> Result<()> {
    let [b_n, _, _, _] = x.dims4("gradient-attack")?;
    if labels.len() != b_n {
        return Err(Error::Eval(format!(
            "gradient attack got {} images but {} labels",
            b_n,
            labels.len()
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("epsilon must be >= 0, got {eps}")));
    }
    Ok(())
}

/// One ascent step from `cur` along `sign(grad)`, projected into the
/// epsilon-ball around `origin` and clamped to the valid pixel range.
fn ascend_project(
    cur: &Tensor<f32>,
    grad: &Tensor<f32>,
    origin: &Tensor<f32>,
    step: f32,
    eps: f32,
) -> Tensor<f32> {
    let mut data = Vec::with_capacity(cur.len());
    for ((&c, &g), &o) in cur.data().iter().zip(grad.data()).zip(origin.data()) {
        let stepped = c + step * sign(g);
        let ball = stepped.min(o + eps).max(o - eps);
        data.push(ball.clamp(0.0, 1.0));
    }
    Tensor::new(cur.shape().to_vec(), data).expect("same length as input")
}

/// Single-step sign attack: `clamp(x + eps * sign(grad), 0, 1)`.
pub fn fgsm(
    net: &Network<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    eps: f32,
) -> Result<Tensor<f32>> {
    check_batch(x, labels, eps)?;
    let grad = grad_wrt_input(net, x, labels)?;
    Ok(ascend_project(x, &grad, x, eps, eps))
}

/// Iterated sign attack, re-projecting into the epsilon-ball each step.
pub fn bim(
    net: &Network<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    eps: f32,
    steps: usize,
    step_size: f32,
) -> Result<Tensor<f32>> {
    check_batch(x, labels, eps)?;
    check_iteration(steps, step_size)?;
    let mut cur = x.clone();
    for _ in 0..steps {
        let grad = grad_wrt_input(net, &cur, labels)?;
        cur = ascend_project(&cur, &grad, x, step_size, eps);
    }
    Ok(cur)
}

/// BIM with an optional uniform random start inside the epsilon-ball.
#[allow(clippy::too_many_arguments)]
pub fn pgd(
    net: &Network<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    eps: f32,
    steps: usize,
    step_size: f32,
    random_start: bool,
    seed: u64,
) -> Result<Tensor<f32>> {
    check_batch(x, labels, eps)?;
    check_iteration(steps, step_size)?;
    let mut cur = if random_start {
        uniform_ball_start(x, eps, seed)
    } else {
        x.clone()
    };
    for _ in 0..steps {
        let grad = grad_wrt_input(net, &cur, labels)?;
        cur = ascend_project(&cur, &grad, x, step_size, eps);
    }
    Ok(cur)
}

/// BIM started from `x + (eps/2) * sign(gaussian noise)`.
pub fn rfgsm(
    net: &Network<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    eps: f32,
    steps: usize,
    step_size: f32,
    seed: u64,
) -> Result<Tensor<f32>> {
    check_batch(x, labels, eps)?;
    check_iteration(steps, step_size)?;
    let mut cur = noise_sign_start(x, eps * 0.5, seed);
    for _ in 0..steps {
        let grad = grad_wrt_input(net, &cur, labels)?;
        cur = ascend_project(&cur, &grad, x, step_size, eps);
    }
    Ok(cur)
}

/// BIM where each raw gradient is smoothed with a normalized Gaussian kernel
/// (same padding) and folded into a momentum accumulator before the sign
/// step, making the perturbation less sensitive to small translations.
#[allow(clippy::too_many_arguments)]
pub fn tifgsm(
    net: &Network<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    eps: f32,
    steps: usize,
    step_size: f32,
    kernel_size: usize,
    kernel_sigma: f64,
    momentum: f64,
) -> Result<Tensor<f32>> {
    check_batch(x, labels, eps)?;
    check_iteration(steps, step_size)?;
    let kernel = gaussian_kernel(kernel_size, kernel_sigma)?;
    let mu = momentum as f32;
    let mut acc = Tensor::zeros(x.shape());
    let mut cur = x.clone();
    for _ in 0..steps {
        let grad = grad_wrt_input(net, &cur, labels)?;
        let smoothed = smooth_gradient(&grad, &kernel, kernel_size)?;
        for (a, &s) in acc.data_mut().iter_mut().zip(smoothed.data()) {
            *a = mu * *a + s;
        }
        cur = ascend_project(&cur, &acc, x, step_size, eps);
    }
    Ok(cur)
}

fn check_iteration(steps: usize, step_size: f32) -> Result<()> {
    if steps == 0 {
        return Err(Error::Config("iterated attack needs steps >= 1".to_string()));
    }
    if !(step_size > 0.0) {
        return Err(Error::Config(format!(
            "step size must be > 0, got {step_size}"
        )));
    }
    Ok(())
}

/// `x` plus per-element uniform noise in `[-eps, eps]`, clamped. One RNG per
/// sample so a sample's start does not depend on its neighbors.
fn uniform_ball_start(x: &Tensor<f32>, eps: f32, seed: u64) -> Tensor<f32> {
    per_sample_noise(x, seed, "pgd-start", |rng, v| {
        let delta = (eps as f64 * rng.gen_range(-1.0..=1.0)) as f32;
        (v + delta).clamp(0.0, 1.0)
    })
}

/// `x` plus `step * sign(standard gaussian)` per element, clamped.
fn noise_sign_start(x: &Tensor<f32>, step: f32, seed: u64) -> Tensor<f32> {
    per_sample_noise(x, seed, "rfgsm-start", |rng, v| {
        (v + step * sign(next_gaussian(rng) as f32)).clamp(0.0, 1.0)
    })
}

/// One RNG per sample, keyed to the sample's content so the noise a sample
/// receives does not depend on which batch it arrives in.
fn per_sample_noise(
    x: &Tensor<f32>,
    seed: u64,
    tag: &str,
    f: impl Fn(&mut rand_chacha::ChaCha8Rng, f32) -> f32,
) -> Tensor<f32> {
    let b_n = x.shape()[0];
    let plane: usize = x.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(x.len());
    for b in 0..b_n {
        let block = &x.data()[b * plane..(b + 1) * plane];
        let mut rng = rng_from(derive_seed(seed, &[tag, &super::content_key(block)]));
        for &v in block {
            data.push(f(&mut rng, v));
        }
    }
    Tensor::new(x.shape().to_vec(), data).expect("same length as input")
}

/// Normalized 2-d Gaussian tap weights, `size` x `size`, row-major.
pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f32>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::Config(format!(
            "smoothing kernel side must be odd, got {size}"
        )));
    }
    let r = (size / 2) as isize;
    let mut weights = Vec::with_capacity(size * size);
    let mut total = 0.0f64;
    for dy in -r..=r {
        for dx in -r..=r {
            let w = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            weights.push(w);
            total += w;
        }
    }
    Ok(weights.iter().map(|w| (w / total) as f32).collect())
}

/// Depthwise same-padding convolution of a `[B, C, H, W]` gradient with a
/// square kernel. Out-of-image taps contribute zero.
pub(crate) fn smooth_gradient(
    grad: &Tensor<f32>,
    kernel: &[f32],
    size: usize,
) -> Result<Tensor<f32>> {
    let [b_n, c_n, h, w] = grad.dims4("gradient-smoothing")?;
    if kernel.len() != size * size {
        return Err(Error::shape(
            "gradient-smoothing",
            format!("kernel of side {size} needs {} taps, got {}", size * size, kernel.len()),
        ));
    }
    let r = (size / 2) as isize;
    let mut out = Tensor::zeros(grad.shape());
    for plane_idx in 0..b_n * c_n {
        let base = plane_idx * h * w;
        let src = &grad.data()[base..base + h * w];
        let dst = &mut out.data_mut()[base..base + h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0f32;
                for ky in -r..=r {
                    let yy = y + ky;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for kx in -r..=r {
                        let xx = x + kx;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let tap = kernel[((ky + r) * size as isize + (kx + r)) as usize];
                        acc += tap * src[(yy * w as isize + xx) as usize];
                    }
                }
                dst[(y * w as isize + x) as usize] = acc;
            }
        }
    }
    Ok(out)
}
