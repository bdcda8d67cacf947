use serde::{Deserialize, Serialize};

use super::StatsError;

/// Accuracy plus macro-averaged precision, recall and F1 over a confusion
/// matrix (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    /// Classes never predicted; their precision counted as 0.
    pub unpredicted_classes: Vec<usize>,
    /// Classes absent from the true labels; their recall counted as 0.
    pub absent_classes: Vec<usize>,
}

impl EvalReport {
    pub fn has_empty_denominator(&self) -> bool {
        !self.unpredicted_classes.is_empty() || !self.absent_classes.is_empty()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `predictions` are `(true, predicted)` label pairs over `n_classes` classes.
pub fn compute_metrics(predictions: &[(usize, usize)], n_classes: usize) -> Result<EvalReport, StatsError> {
    if predictions.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(&(t, p)) = predictions.iter().find(|(t, p)| *t >= n_classes || *p >= n_classes) {
        return Err(StatsError::LabelOutOfRange { label: t.max(p), n_classes });
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for &(t, p) in predictions {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let mut unpredicted = Vec::new();
    let mut absent = Vec::new();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let predicted: usize = (0..n_classes).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        if predicted == 0 {
            unpredicted.push(c);
        }
        if actual == 0 {
            absent.push(c);
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let k = n_classes as f64;
    Ok(EvalReport {
        accuracy: ratio(correct, predictions.len()),
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
        confusion,
        n_test: predictions.len(),
        unpredicted_classes: unpredicted,
        absent_classes: absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_confusion(c: &[Vec<usize>]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, row) in c.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                out.extend(std::iter::repeat_n((t, p), n));
            }
        }
        out
    }

    #[test]
    fn perfect_predictions() {
        let preds: Vec<_> = (0..9).map(|i| (i % 3, i % 3)).collect();
        let r = compute_metrics(&preds, 3).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!r.has_empty_denominator());
    }

    #[test]
    fn binary_confusion() {
        let r = compute_metrics(&from_confusion(&[vec![8, 2], vec![3, 7]]), 2).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.precision - (8.0 / 11.0 + 7.0 / 9.0) / 2.0).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
        let f1_0 = 2.0 * (8.0 / 11.0) * 0.8 / (8.0 / 11.0 + 0.8);
        let f1_1 = 2.0 * (7.0 / 9.0) * 0.7 / (7.0 / 9.0 + 0.7);
        assert!((r.f1 - (f1_0 + f1_1) / 2.0).abs() < 1e-12);
        assert!((r.f1 - 0.7498).abs() < 1e-3);
        assert_eq!(r.confusion, vec![vec![8, 2], vec![3, 7]]);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let preds = vec![(0, 0), (1, 1), (2, 0), (2, 1)];
        let r = compute_metrics(&preds, 3).unwrap();
        assert_eq!(r.unpredicted_classes, vec![2]);
        assert!(r.has_empty_denominator());
        assert!((r.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_metrics(&[], 2), Err(StatsError::EmptyInput)));
        assert!(matches!(compute_metrics(&[(0, 3)], 2), Err(StatsError::LabelOutOfRange { .. })));
    }
}
