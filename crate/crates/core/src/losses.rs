//! Training objectives over 7-way ordinal scores: cross-entropy, label-smoothed
//! cross-entropy, mean squared error for the regression framing, and the
//! scale-preserving cross-entropy that scales each example's cross-entropy by
//! `1 + λ·|y − ŷ|^μ`, where `ŷ` is the arg-max class.
//!
//! Every loss is a batch mean. Labels are class scores in `1..=7`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    CeLs,
    Mse,
    Spce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::CeLs => "ce_ls",
            LossKind::Mse => "mse",
            LossKind::Spce => "spce",
        }
    }

    pub fn is_regression(self) -> bool {
        self == LossKind::Mse
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "ce_ls" => Ok(LossKind::CeLs),
            "mse" => Ok(LossKind::Mse),
            "spce" => Ok(LossKind::Spce),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// label smoothing strength, used by `ce_ls`
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// distance penalty scale, used by `spce`
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// distance penalty exponent, used by `spce`
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    1.0
}

fn default_mu() -> f64 {
    1.0
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            alpha: default_alpha(),
            lambda: default_lambda(),
            mu: default_mu(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be finite and > 0, got {}", self.mu)));
        }
        Ok(())
    }

    /// Batch loss and its gradient with respect to the network outputs (logits for the
    /// classification kinds, the single regression output for `mse`).
    pub fn value_and_grad<T: Real>(&self, outputs: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
        match self.kind {
            LossKind::Ce => soft_target_loss(outputs, labels, |y| one_hot(y)),
            LossKind::CeLs => {
                let alpha = T::lit(self.alpha);
                soft_target_loss(outputs, labels, |y| smoothed(y, alpha))
            }
            LossKind::Spce => spce_value_and_grad(outputs, labels, T::lit(self.lambda), T::lit(self.mu)),
            LossKind::Mse => {
                if outputs.cols() != 1 {
                    return Err(Error::Shape(format!(
                        "mse expects one output per example, got {}",
                        outputs.cols()
                    )));
                }
                mse_value_and_grad(outputs.as_slice(), labels)
            }
        }
    }

    pub fn value<T: Real>(&self, outputs: &Matrix<T>, labels: &[usize]) -> Result<T> {
        Ok(self.value_and_grad(outputs, labels)?.0)
    }
}

fn check_label(label: usize) -> Result<usize> {
    if (1..=NUM_CLASSES).contains(&label) {
        Ok(label - 1)
    } else {
        Err(Error::LabelOutOfRange(label as i64))
    }
}

fn check_batch<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<()> {
    if logits.cols() != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "expected {NUM_CLASSES} logits per example, got {}",
            logits.cols()
        )));
    }
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(())
}

/// Numerically stable `log softmax`.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(T::exp).collect()
}

/// Predicted class `1..=7`: the arg-max, ties resolved toward the lower class.
pub fn argmax_class<T: Real>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best + 1
}

fn one_hot<T: Real>(y: usize) -> [T; NUM_CLASSES] {
    let mut t = [T::zero(); NUM_CLASSES];
    t[y] = T::one();
    t
}

fn smoothed<T: Real>(y: usize, alpha: T) -> [T; NUM_CLASSES] {
    let k = T::from_usize_lossy(NUM_CLASSES);
    let mut t = [alpha / k; NUM_CLASSES];
    t[y] = (T::one() - alpha) + alpha / k;
    t
}

/// Label-smoothed target distribution for a score: `(1 − α) + α/7` on the true class,
/// `α/7` elsewhere.
pub fn smooth_labels<T: Real>(label: usize, alpha: T) -> Result<Vec<T>> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(smoothed(check_label(label)?, alpha).to_vec())
}

/// Mean over the batch of `−Σ_k target_k · log p_k` for targets summing to one.
fn soft_target_loss<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
    target: impl Fn(usize) -> [T; NUM_CLASSES],
) -> Result<(T, Matrix<T>)> {
    check_batch(logits, labels)?;
    let n = T::from_usize_lossy(labels.len());
    let mut total = T::zero();
    let mut grad = Matrix::zeros(logits.rows(), NUM_CLASSES);
    for (i, &label) in labels.iter().enumerate() {
        let tgt = target(check_label(label)?);
        let logp = log_softmax(logits.row(i));
        total -= tgt.iter().zip(&logp).map(|(&t, &lp)| t * lp).sum::<T>();
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (logp[k].exp() - tgt[k]) / n;
        }
    }
    Ok((total / n, grad))
}

pub fn cross_entropy<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<T> {
    Ok(soft_target_loss(logits, labels, one_hot)?.0)
}

pub fn label_smooth_ce<T: Real>(logits: &Matrix<T>, labels: &[usize], alpha: T) -> Result<T> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(soft_target_loss(logits, labels, |y| smoothed(y, alpha))?.0)
}

fn mse_value_and_grad<T: Real>(preds: &[T], labels: &[usize]) -> Result<(T, Matrix<T>)> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", preds.len(), labels.len())));
    }
    if preds.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("regression predictions".into()));
    }
    let n = T::from_usize_lossy(preds.len());
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(preds.len());
    for (&p, &y) in preds.iter().zip(labels) {
        check_label(y)?;
        let d = p - T::from_usize_lossy(y);
        total += d * d;
        grad.push(T::lit(2.0) * d / n);
    }
    Ok((total / n, Matrix::from_vec(preds.len(), 1, grad)?))
}

/// Mean of `(pred − target)²`.
pub fn mse_loss<T: Real>(preds: &[T], labels: &[usize]) -> Result<T> {
    Ok(mse_value_and_grad(preds, labels)?.0)
}

/// `1 + λ·|y − ŷ|^μ`.
pub fn spce_factor<T: Real>(label: usize, predicted: usize, lambda: T, mu: T) -> T {
    let d = T::from_usize_lossy(label.abs_diff(predicted));
    T::one() + lambda * d.powf(mu)
}

fn spce_value_and_grad<T: Real>(logits: &Matrix<T>, labels: &[usize], lambda: T, mu: T) -> Result<(T, Matrix<T>)> {
    if !(lambda >= T::zero()) || !(mu > T::zero()) {
        return Err(Error::InvalidArgument(format!("need lambda >= 0 and mu > 0, got {lambda}, {mu}")));
    }
    check_batch(logits, labels)?;
    let n = T::from_usize_lossy(labels.len());
    let mut total = T::zero();
    let mut grad = Matrix::zeros(logits.rows(), NUM_CLASSES);
    for (i, &label) in labels.iter().enumerate() {
        let y = check_label(label)?;
        let row = logits.row(i);
        // the arg-max is piecewise constant, so the factor is a constant for differentiation
        let factor = spce_factor(label, argmax_class(row), lambda, mu);
        let logp = log_softmax(row);
        total -= factor * logp[y];
        for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
            let target = if k == y { T::one() } else { T::zero() };
            *g = factor * (logp[k].exp() - target) / n;
        }
    }
    Ok((total / n, grad))
}

pub fn spce_loss<T: Real>(logits: &Matrix<T>, labels: &[usize], lambda: T, mu: T) -> Result<T> {
    Ok(spce_value_and_grad(logits, labels, lambda, mu)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(rows: &[[f64; 7]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// direct `−Σ 𝟙·log p` with an explicitly normalized softmax
    fn naive_ce(logits: &Matrix<f64>, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let e: Vec<f64> = logits.row(i).iter().map(|z| z.exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 1..=7 {
                if c == y {
                    total -= (e[c - 1] / s).ln();
                }
            }
        }
        total / labels.len() as f64
    }

    #[test]
    fn uniform_logits_give_ln7() {
        let l = batch(&[[0.3; 7], [-2.0; 7]]);
        assert!((cross_entropy(&l, &[1, 5]).unwrap() - 7f64.ln()).abs() < 1e-12);
        for alpha in [0.0, 0.1, 0.5, 0.9] {
            assert!((label_smooth_ce(&l, &[3, 7], alpha).unwrap() - 7f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let mut row = [0.0; 7];
        row[2] = 60.0;
        let l = batch(&[row]);
        assert!(cross_entropy(&l, &[3]).unwrap() < 1e-20);
        assert!(spce_loss(&l, &[3], 1.0, 1.0).unwrap() < 1e-20);
    }

    #[test]
    fn smoothing_values() {
        assert_eq!(smooth_labels(4, 0.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let s = smooth_labels(1, 0.1f64).unwrap();
        assert!((s[0] - 0.9142857142857143).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| (v - 0.014285714285714285).abs() < 1e-12));
        assert!(smooth_labels(1, 1.0f64).is_err());
        assert!(smooth_labels(8, 0.1f64).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[3.0], &[5]).unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 7.0], &[1, 7]).unwrap(), 0.0);
        assert!(mse_loss(&[f64::NAN], &[1]).is_err());
    }

    #[test]
    fn spce_worst_case_factor() {
        // label 7, arg-max at class 1
        let mut row = [0.0; 7];
        row[0] = 2.0;
        row[6] = 1.0;
        let l = batch(&[row]);
        let ce = cross_entropy(&l, &[7]).unwrap();
        let sp = spce_loss(&l, &[7], 1.0, 1.0).unwrap();
        assert!((sp - 7.0 * ce).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_the_lower_class() {
        assert_eq!(argmax_class(&[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]), 2);
        assert_eq!(argmax_class(&[0.0; 7]), 1);
        assert_eq!(argmax_class(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0]), 7);
    }

    #[test]
    fn bad_labels_and_shapes() {
        let l = batch(&[[0.0; 7]]);
        assert!(matches!(cross_entropy(&l, &[0]), Err(Error::LabelOutOfRange(0))));
        assert!(matches!(spce_loss(&l, &[8], 1.0, 1.0), Err(Error::LabelOutOfRange(8))));
        assert!(cross_entropy(&l, &[1, 2]).is_err());
        assert!(cross_entropy(&Matrix::<f64>::zeros(1, 6), &[1]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(LossKind::Spce).validate().is_ok());
        let mut c = LossConfig::new(LossKind::CeLs);
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = LossConfig::new(LossKind::Spce);
        c.mu = 0.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn ce_matches_naive_formula(rows in prop::collection::vec(prop::array::uniform7(-8.0f64..8.0), 1..10), seed in 0usize..1000) {
            let labels: Vec<usize> = (0..rows.len()).map(|i| (seed + 3 * i) % 7 + 1).collect();
            let l = batch(&rows);
            let a = cross_entropy(&l, &labels).unwrap();
            prop_assert!((a - naive_ce(&l, &labels)).abs() < 1e-9);
            prop_assert!((spce_loss(&l, &labels, 0.0, 1.7).unwrap() - a).abs() < 1e-9);
            prop_assert!((label_smooth_ce(&l, &labels, 0.0).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn spce_monotone_in_lambda(row in prop::array::uniform7(-5.0f64..5.0), y in 1usize..=7, l1 in 0.0f64..3.0, dl in 0.0f64..3.0) {
            let l = batch(&[row]);
            let a = spce_loss(&l, &[y], l1, 1.5).unwrap();
            let b = spce_loss(&l, &[y], l1 + dl, 1.5).unwrap();
            prop_assert!(b >= a);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn smoothed_targets_sum_to_one(alpha in 0.0f64..0.999, y in 1usize..=7) {
            let s: f64 = smooth_labels(y, alpha).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
