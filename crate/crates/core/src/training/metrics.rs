use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Classification quality of one set of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Unweighted mean of per-class F1 over classes present in the truth or the predictions.
    pub macro_f1: f64,
    /// Per-class F1 weighted by true-class support.
    pub weighted_f1: f64,
    /// `None` for classes absent from both truth and predictions.
    pub per_class_f1: Vec<Option<f64>>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    /// Mean absolute difference between predicted and true score.
    pub mae: f64,
    pub count: usize,
}

fn check(labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| !(1..=NUM_CLASSES).contains(&l)) {
        Some(&l) => Err(Error::LabelOutOfRange(l as i64)),
        None => Ok(()),
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize]) -> Result<Vec<Vec<u64>>> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} labels but {} predictions", truth.len(), pred.len())));
    }
    check(truth)?;
    check(pred)?;
    let mut m = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t - 1][p - 1] += 1;
    }
    Ok(m)
}

pub fn evaluate_predictions(truth: &[usize], pred: &[usize]) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty prediction set".into()));
    }
    let confusion = confusion_matrix(truth, pred)?;
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let (mut weighted, mut present_sum, mut present) = (0.0, 0.0, 0usize);
    for k in 0..NUM_CLASSES {
        let tp = confusion[k][k] as f64;
        let support: u64 = confusion[k].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
        if support == 0 && predicted == 0 {
            per_class.push(None);
            continue;
        }
        let f1 = 2.0 * tp / (support + predicted) as f64;
        per_class.push(Some(f1));
        present_sum += f1;
        present += 1;
        weighted += f1 * support as f64;
    }
    let mae = truth.iter().zip(pred).map(|(&t, &p)| t.abs_diff(p) as f64).sum::<f64>() / truth.len() as f64;
    Ok(Evaluation {
        macro_f1: present_sum / present as f64,
        weighted_f1: weighted / truth.len() as f64,
        per_class_f1: per_class,
        confusion,
        mae,
        count: truth.len(),
    })
}

pub fn macro_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(evaluate_predictions(truth, pred)?.macro_f1)
}

/// Arithmetic mean and sample standard deviation (`n - 1`; 0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<usize> = (0..21).map(|i| i % 7 + 1).collect();
        let e = evaluate_predictions(&y, &y).unwrap();
        assert_eq!(e.macro_f1, 1.0);
        assert_eq!(e.weighted_f1, 1.0);
        assert_eq!(e.mae, 0.0);
    }

    #[test]
    fn constant_prediction_on_balanced_set() {
        let y: Vec<usize> = (0..70).map(|i| i % 7 + 1).collect();
        let e = evaluate_predictions(&y, &[1; 70]).unwrap();
        let want = 2.0 * (1.0 / 7.0) / (1.0 + 1.0 / 7.0) / 7.0;
        assert!((e.macro_f1 - want).abs() < 1e-12);
        assert!((e.macro_f1 - 0.0357).abs() < 1e-4);
        for (k, row) in e.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), 10, "class {}", k + 1);
        }
    }

    #[test]
    fn absent_classes_are_excluded() {
        let e = evaluate_predictions(&[1, 2, 2], &[1, 2, 1]).unwrap();
        assert_eq!(e.per_class_f1[3], None);
        let f1_1 = 2.0 / 3.0;
        let f1_2 = 2.0 / 3.0;
        assert!((e.macro_f1 - (f1_1 + f1_2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(evaluate_predictions(&[], &[]).is_err());
        assert!(evaluate_predictions(&[1], &[8]).is_err());
        assert!(evaluate_predictions(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn mean_and_sd() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[0.7]), (0.7, 0.0));
    }
}
