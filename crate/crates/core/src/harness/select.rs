//! Evaluation-set selection.
//!
//! Transfer is only meaningful on inputs the source side gets right to begin
//! with, so each adversarial set starts from test samples that every
//! reference model classifies correctly, drawn class-balanced with a seeded
//! shuffle. Selection is deterministic per (pool, references, seed).

use crate::data::Sample;
use crate::diff::{stack, Network, Tensor};
use crate::error::{Error, Result};
use crate::model::predict;
use crate::rng::{derive_seed, rng_from};

/// A drawn evaluation set: stacked images, their labels, and the positions
/// in the pool they came from.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Draws `n` samples (`n / 2` per class) that every reference model labels
/// correctly. Errors with the exhausted class when a class has too few
/// correctly classified samples left.
pub fn select_eval_set(
    references: &[&Network<f32>],
    pool: &[Sample],
    n: usize,
    seed: u64,
) -> Result<EvalSet> {
    if references.is_empty() {
        return Err(Error::Config(
            "evaluation-set selection needs at least one reference model".to_string(),
        ));
    }
    let mut correct = vec![true; pool.len()];
    for net in references {
        let preds = predict(net, pool)?;
        for (flag, (pred, sample)) in correct.iter_mut().zip(preds.iter().zip(pool)) {
            *flag &= *pred == sample.label;
        }
    }
    select_from_mask(&correct, pool, n, seed)
}

/// Mask-based variant for callers that already know which pool samples the
/// references classify correctly.
pub(crate) fn select_from_mask(
    correct: &[bool],
    pool: &[Sample],
    n: usize,
    seed: u64,
) -> Result<EvalSet> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "evaluation-set size must be a positive even number, got {n}"
        )));
    }
    if correct.len() != pool.len() {
        return Err(Error::Eval(format!(
            "correctness mask covers {} samples, pool has {}",
            correct.len(),
            pool.len()
        )));
    }
    for sample in pool {
        if sample.label > 1 {
            return Err(Error::Eval(format!(
                "binary evaluation pool contains label {}",
                sample.label
            )));
        }
    }

    let need = n / 2;
    let mut chosen = Vec::with_capacity(n);
    for class in 0..2usize {
        let candidates: Vec<usize> = (0..pool.len())
            .filter(|&i| pool[i].label == class && correct[i])
            .collect();
        if candidates.len() < need {
            return Err(Error::EvalPoolExhausted {
                class: class.to_string(),
                needed: need,
                available: candidates.len(),
            });
        }
        let mut rng = rng_from(derive_seed(seed, &["eval-set", &class.to_string()]));
        let picks = rand::seq::index::sample(&mut rng, candidates.len(), need);
        chosen.extend(picks.iter().map(|p| candidates[p]));
    }
    chosen.sort_unstable();

    let images: Vec<&Tensor<f32>> = chosen.iter().map(|&i| &pool[i].image).collect();
    Ok(EvalSet {
        images: stack(&images)?,
        labels: chosen.iter().map(|&i| pool[i].label).collect(),
        indices: chosen,
    })
}
