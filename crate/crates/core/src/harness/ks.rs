//! Two-sample Kolmogorov-Smirnov test.
//!
//! Used to compare attack-success distributions between the two transfer
//! directions across dataset sources. The statistic is the exact supremum
//! distance between the two empirical CDFs; the p-value uses the asymptotic
//! two-sample Kolmogorov distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sample KS test. Rejects empty or non-finite samples.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Eval(format!(
            "ks-test needs two non-empty samples, got sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Eval("ks-test samples must be finite".to_string()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);

    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut statistic = 0.0f64;
    while i < n && j < m {
        // Advance over every copy of the smaller value on both sides before
        // measuring, so ties within or across samples do not inflate D.
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] == v {
            i += 1;
        }
        while j < m && ys[j] == v {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        statistic = statistic.max(gap);
    }

    let lambda = ((n as f64 * m as f64) / (n + m) as f64).sqrt() * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_tail(lambda),
        n_a: n,
        n_b: m,
    })
}

/// Tail probability Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)
/// of the Kolmogorov distribution, clamped to [0, 1]. For tiny lambda the
/// alternating series converges too slowly to matter and the tail is 1.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-9 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut last_term = f64::INFINITY;
    for k in 1..=100u32 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        last_term = term;
        if term < 1e-16 {
            break;
        }
    }
    if last_term > 1e-10 {
        // Did not converge within 100 terms; only happens for lambda so
        // small the distributions are indistinguishable.
        return 1.0;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{next_gaussian, rng_from};

    /// Direct double-loop oracle: evaluate both ECDFs at every data point.
    fn oracle_d(a: &[f64], b: &[f64]) -> f64 {
        let mut d = 0.0f64;
        for v in a.iter().chain(b) {
            let fa = a.iter().filter(|x| *x <= v).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|x| *x <= v).count() as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    /// Independent tail series summed in the opposite (descending) order.
    fn oracle_tail(lambda: f64) -> f64 {
        let mut sum = 0.0f64;
        for k in (1..=100u32).rev() {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }

    fn gaussian_sample(n: usize, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        (0..n).map(|_| shift + next_gaussian(&mut rng)).collect()
    }

    #[test]
    fn statistic_matches_double_loop_oracle_on_30_by_30_fixture() {
        let a = gaussian_sample(30, 0.0, 11);
        let b = gaussian_sample(30, 0.75, 12);
        let result = ks_test(&a, &b).unwrap();
        assert_eq!(result.statistic, oracle_d(&a, &b));
        assert_eq!(result.n_a, 30);
        assert_eq!(result.n_b, 30);

        let lambda = ((30.0 * 30.0) / 60.0f64).sqrt() * result.statistic;
        assert!((result.p_value - oracle_tail(lambda)).abs() < 1e-6);

        // Unequal sizes run through the same oracle.
        let c = gaussian_sample(17, 0.2, 13);
        let r2 = ks_test(&a, &c).unwrap();
        assert_eq!(r2.statistic, oracle_d(&a, &c));
    }

    #[test]
    fn hand_computed_interleaved_case() {
        // ECDF gaps: 1/3 after each a-value, 0 after each b-value.
        let a = [1.0, 2.0, 3.0];
        let b = [1.5, 2.5, 3.5];
        let r = ks_test(&a, &b).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_across_samples_do_not_inflate_the_statistic() {
        // Both ECDFs jump to 1 at the same value, so D = 0 and p = 1.
        let r = ks_test(&[1.0, 1.0], &[1.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        // A tie at the low end plus an extra high value in one sample.
        let r = ks_test(&[1.0, 2.0], &[1.0]).unwrap();
        assert_eq!(r.statistic, 0.5);
    }

    #[test]
    fn identical_and_disjoint_samples_hit_the_extremes() {
        let a = gaussian_sample(25, 0.0, 3);
        let same = ks_test(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);

        let low: Vec<f64> = (0..30).map(|i| i as f64 / 100.0).collect();
        let high: Vec<f64> = (0..30).map(|i| 10.0 + i as f64).collect();
        let split = ks_test(&low, &high).unwrap();
        assert_eq!(split.statistic, 1.0);
        assert!(split.p_value < 1e-6);
    }

    #[test]
    fn tiny_shifts_are_not_significant() {
        let a = gaussian_sample(30, 0.0, 21);
        let b = gaussian_sample(30, 0.05, 22);
        let r = ks_test(&a, &b).unwrap();
        assert!(r.p_value > 0.05, "p = {}", r.p_value);
    }

    #[test]
    fn empty_or_non_finite_inputs_error() {
        assert!(matches!(ks_test(&[], &[1.0]), Err(Error::Eval(_))));
        assert!(matches!(ks_test(&[1.0], &[]), Err(Error::Eval(_))));
        assert!(matches!(ks_test(&[f64::NAN], &[1.0]), Err(Error::Eval(_))));
    }
}
