//! Binary classification metrics with the F1 conventions used throughout
//! the benchmark: class 1 is the positive class, and an undefined
//! precision, recall, or F1 collapses to zero.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Confusion counts and derived scores of predictions against truth.
pub fn f1_score(predictions: &[usize], truth: &[usize], positive_class: usize) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::Eval(format!(
            "{} predictions against {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyEval("f1 over zero samples".to_string()));
    }
    let mut m = Metrics {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_count: 0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        accuracy: 0.0,
    };
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p == positive_class, t == positive_class) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_count += 1,
        }
    }
    if m.tp + m.fp > 0 {
        m.precision = m.tp as f64 / (m.tp + m.fp) as f64;
    }
    if m.tp + m.fn_count > 0 {
        m.recall = m.tp as f64 / (m.tp + m.fn_count) as f64;
    }
    if m.precision + m.recall > 0.0 {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    m.accuracy = (m.tp + m.tn) as f64 / predictions.len() as f64;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one() {
        let m = f1_score(&[0, 1, 1, 0], &[0, 1, 1, 0], 1).unwrap();
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.tp, m.fp, m.tn, m.fn_count), (2, 0, 2, 0));
    }

    #[test]
    fn inverted_predictions_score_zero() {
        let m = f1_score(&[1, 0, 0, 1], &[0, 1, 1, 0], 1).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn known_confusion_matrix_scores() {
        // tp=2 fp=1 tn=1 fn=0: precision 2/3, recall 1, f1 0.8.
        let m = f1_score(&[1, 1, 0, 1], &[1, 0, 0, 1], 1).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_count), (2, 1, 1, 0));
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 0.8).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn never_predicting_positive_gives_defined_zero_f1() {
        let m = f1_score(&[0, 0, 0], &[1, 1, 0], 1).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn positive_class_selection_flips_roles() {
        let m = f1_score(&[0, 0, 1], &[0, 1, 1], 0).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_count), (1, 1, 1, 0));
    }

    #[test]
    fn length_mismatch_and_empty_inputs_error() {
        assert!(matches!(f1_score(&[0], &[0, 1], 1), Err(Error::Eval(_))));
        assert!(matches!(f1_score(&[], &[], 1), Err(Error::EmptyEval(_))));
    }
}
