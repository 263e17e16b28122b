//! Train/validation/test partitioning and class-imbalance rebalancing.

use rand::seq::SliceRandom;

use super::{BalanceLevel, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// A dataset partition before provenance is attached.
#[derive(Clone, Debug)]
pub struct SplitParts {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Partitions samples per class by the given ratios using largest-remainder
/// rounding, after a seeded per-class shuffle.
///
/// Requires equal per-class counts (see `select_equal`) so the validation
/// and test splits come out class-balanced; anything else is a split error.
pub fn split(samples: &[Sample], ratios: [f64; 3], seed: u64) -> Result<SplitParts> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in samples.iter().enumerate() {
        match s.label {
            0 | 1 => by_class[s.label].push(i),
            other => {
                return Err(Error::Split(format!(
                    "label {other} outside the binary label set"
                )))
            }
        }
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        let missing = if by_class[0].is_empty() { 0 } else { 1 };
        return Err(Error::EmptyClass(format!("class {missing} has no samples")));
    }
    if by_class[0].len() != by_class[1].len() {
        return Err(Error::Split(format!(
            "per-class counts {} vs {} must match before splitting",
            by_class[0].len(),
            by_class[1].len()
        )));
    }

    let mut parts = SplitParts {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, indices) in by_class.iter().enumerate() {
        let counts = largest_remainder(indices.len(), &ratios);
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Split(format!(
                "class {class}: {} samples cannot cover all three splits at {ratios:?}",
                indices.len()
            )));
        }
        let mut order = indices.clone();
        let mut rng = rng_from(derive_seed(seed, &["split", &class.to_string()]));
        order.shuffle(&mut rng);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        for &i in &order[..a] {
            parts.train.push(samples[i].clone());
        }
        for &i in &order[a..b] {
            parts.validation.push(samples[i].clone());
        }
        for &i in &order[b..] {
            parts.test.push(samples[i].clone());
        }
    }
    Ok(parts)
}

/// Integer apportionment of `n` into parts proportional to `ratios`.
fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = [exact[0] as usize, exact[1] as usize, exact[2] as usize];
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Largest fractional remainder first; ties favor the earlier split.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    counts
}

/// Minority-class size for a given majority size and balance level:
/// `ceil(majority * p / (1 - p))` computed in exact integer arithmetic.
pub fn rebalance_counts(majority: usize, level: BalanceLevel) -> usize {
    let (num, den) = level.ratio();
    let scaled = majority as u128 * num as u128;
    ((scaled + den as u128 - 1) / den as u128) as usize
}

/// Undersamples the minority class of a training set to reach the requested
/// balance level. The majority class is untouched; surviving samples keep
/// their original relative order.
pub fn rebalance(
    train: &[Sample],
    level: BalanceLevel,
    minority_class: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if minority_class > 1 {
        return Err(Error::Split(format!(
            "minority class {minority_class} outside the binary label set"
        )));
    }
    let minority_count = train.iter().filter(|s| s.label == minority_class).count();
    let majority_count = train.len() - minority_count;
    if minority_count == 0 || majority_count == 0 {
        return Err(Error::EmptyClass(format!(
            "rebalance needs both classes, got {minority_count}/{majority_count}"
        )));
    }
    let target = rebalance_counts(majority_count, level);
    if target > minority_count {
        return Err(Error::Split(format!(
            "balance level {level} wants {target} minority samples, only {minority_count} available"
        )));
    }
    let mut minority_positions: Vec<usize> = train
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == minority_class)
        .map(|(i, _)| i)
        .collect();
    let mut rng = rng_from(derive_seed(seed, &["rebalance", level.as_str()]));
    minority_positions.shuffle(&mut rng);
    let mut keep: Vec<bool> = train.iter().map(|s| s.label != minority_class).collect();
    for &pos in &minority_positions[..target] {
        keep[pos] = true;
    }
    Ok(train
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect())
}
