//! Score-based black-box search over square-shaped patches.
//!
//! The attacker only sees class probabilities from an oracle, never
//! gradients. Starting from vertical stripes of +/- epsilon, it proposes one
//! square patch at a time (shrinking over the query budget), keeping a
//! proposal only when it strictly lowers the margin `p_true - max p_other`.
//! Every oracle call is counted and the search stops at the budget or at a
//! label flip.

use crate::diff::{argmax_row, Tensor};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SquareOutcome {
    /// Perturbed image `[C, H, W]`, every pixel within epsilon of the
    /// original and inside `[0, 1]`.
    pub adversarial: Tensor<f32>,
    /// Oracle calls actually spent (<= budget).
    pub queries: usize,
    /// Whether the oracle's top class moved off the true label.
    pub flipped: bool,
}

/// Fractions of the budget at which the proposal patch halves in area.
const SHRINK_POINTS: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.6, 0.8];

/// Margin loss the search minimizes: probability of the true class minus the
/// best other class. Negative means the label has flipped.
fn margin_loss(probs: &[f32], y: usize) -> Result<f64> {
    if y >= probs.len() {
        return Err(Error::Eval(format!(
            "true label {y} out of range for {} classes",
            probs.len()
        )));
    }
    let best_other = probs
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != y)
        .map(|(_, &p)| p)
        .fold(f32::NEG_INFINITY, f32::max);
    Ok((probs[y] - best_other) as f64)
}

pub fn square_attack<F>(
    oracle: &mut F,
    x: &Tensor<f32>,
    y: usize,
    eps: f32,
    query_budget: usize,
    p_init: f64,
    seed: u64,
) -> Result<SquareOutcome>
where
    F: FnMut(&Tensor<f32>) -> Result<Vec<f32>>,
{
    let [c_n, h, w] = x.dims3("square-attack")?;
    if query_budget == 0 {
        return Err(Error::Config("square attack needs query_budget >= 1".to_string()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("epsilon must be >= 0, got {eps}")));
    }
    if !(p_init > 0.0 && p_init <= 1.0) {
        return Err(Error::Config(format!(
            "p_init must be in (0, 1], got {p_init}"
        )));
    }

    let mut rng = rng_from(seed);
    let mut queries = 0usize;
    let mut ask = |img: &Tensor<f32>, queries: &mut usize| -> Result<Vec<f32>> {
        *queries += 1;
        oracle(img)
    };

    let mut best = x.clone();
    let probs = ask(&best, &mut queries)?;
    let mut best_loss = margin_loss(&probs, y)?;
    let mut flipped = argmax_row(&probs) != y;

    // Initialization: per-channel vertical stripes of +/- eps, a strong
    // low-frequency perturbation that usually beats the clean image.
    if !flipped && queries < query_budget {
        let mut cand = best.clone();
        for ch in 0..c_n {
            for col in 0..w {
                let delta = if rng.gen::<bool>() { eps } else { -eps };
                for row in 0..h {
                    let idx = (ch * h + row) * w + col;
                    cand.data_mut()[idx] = (x.data()[idx] + delta).clamp(0.0, 1.0);
                }
            }
        }
        let probs = ask(&cand, &mut queries)?;
        let loss = margin_loss(&probs, y)?;
        if loss < best_loss {
            best = cand;
            best_loss = loss;
            flipped = argmax_row(&probs) != y;
        }
    }

    while !flipped && queries < query_budget {
        let spent = queries as f64 / query_budget as f64;
        let halvings = SHRINK_POINTS.iter().filter(|&&t| spent >= t).count() as i32;
        let area = p_init * 0.5f64.powi(halvings) * (h * w) as f64;
        let side = (area.sqrt().round() as usize).clamp(1, h.min(w));

        let top = rng.gen_range(0..=h - side);
        let left = rng.gen_range(0..=w - side);
        let mut cand = best.clone();
        for ch in 0..c_n {
            let delta = if rng.gen::<bool>() { eps } else { -eps };
            for row in top..top + side {
                for col in left..left + side {
                    let idx = (ch * h + row) * w + col;
                    cand.data_mut()[idx] = (x.data()[idx] + delta).clamp(0.0, 1.0);
                }
            }
        }
        let probs = ask(&cand, &mut queries)?;
        let loss = margin_loss(&probs, y)?;
        if loss < best_loss {
            best = cand;
            best_loss = loss;
            flipped = argmax_row(&probs) != y;
        }
    }

    Ok(SquareOutcome {
        adversarial: best,
        queries,
        flipped,
    })
}
