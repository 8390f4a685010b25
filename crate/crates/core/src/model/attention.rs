use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::scalar::Real;

/// Segment-wise temporal attention.
///
/// For segment descriptors `F` (`s x c`), the 1-D convolution over the descriptor axis
/// gives `z = F · w2ᵀ` (one score per segment), the fully connected layer mixes the
/// segment scores `h = W1 · z`, and the weights are `a = ReLU(h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<T> {
    /// `s x s`
    pub w1: Matrix<T>,
    /// length `c`
    pub w2: Vec<T>,
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionTrace<T> {
    pub scores: Vec<T>,
    pub hidden: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Attention<T> {
    /// `W1` starts at the identity plus a small perturbation, `w2` Glorot-uniform.
    pub fn new<R: Rng>(segments: usize, descriptor_len: usize, rng: &mut R) -> Self {
        let b1 = 0.1 / (segments as f64).sqrt();
        let w1 = Matrix::from_fn(segments, segments, |i, j| {
            let base = if i == j { 1.0 } else { 0.0 };
            T::lit(base + rng.random_range(-b1..b1))
        });
        let b2 = (6.0 / (descriptor_len + 1) as f64).sqrt();
        let w2 = (0..descriptor_len)
            .map(|_| T::lit(rng.random_range(-b2..b2)))
            .collect();
        Self { w1, w2 }
    }

    pub fn segments(&self) -> usize {
        self.w1.rows()
    }

    pub fn descriptor_len(&self) -> usize {
        self.w2.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            w2: vec![T::zero(); self.w2.len()],
        }
    }

    fn check(&self, descriptors: &Matrix<T>) -> Result<()> {
        if descriptors.shape() != (self.segments(), self.descriptor_len()) {
            return Err(Error::Shape(format!(
                "attention over {} segments of {} features got a {}x{} descriptor block",
                self.segments(),
                self.descriptor_len(),
                descriptors.rows(),
                descriptors.cols()
            )));
        }
        Ok(())
    }

    pub fn trace(&self, descriptors: &Matrix<T>) -> Result<AttentionTrace<T>> {
        self.check(descriptors)?;
        let scores = descriptors.mul_vec(&self.w2);
        let hidden = self.w1.mul_vec(&scores);
        let weights = hidden.iter().map(|&h| h.max(T::zero())).collect();
        Ok(AttentionTrace {
            scores,
            hidden,
            weights,
        })
    }

    /// Non-negative weight per segment.
    pub fn forward(&self, descriptors: &Matrix<T>) -> Result<Vec<T>> {
        Ok(self.trace(descriptors)?.weights)
    }

    /// Accumulates `dL/dW1`, `dL/dw2` into `grad` and returns `dL/dF` for `dL/da`.
    pub fn backward(&self, descriptors: &Matrix<T>, trace: &AttentionTrace<T>, d_weights: &[T], grad: &mut Self) -> Matrix<T> {
        let s = self.segments();
        let d_hidden: Vec<T> = d_weights
            .iter()
            .zip(&trace.hidden)
            .map(|(&d, &h)| if h > T::zero() { d } else { T::zero() })
            .collect();
        for i in 0..s {
            axpy(d_hidden[i], &trace.scores, grad.w1.row_mut(i));
        }
        let d_scores = self.w1.tr_mul_vec(&d_hidden);
        let mut d_desc = Matrix::zeros(s, self.descriptor_len());
        for j in 0..s {
            axpy(d_scores[j], descriptors.row(j), &mut grad.w2);
            axpy(d_scores[j], &self.w2, d_desc.row_mut(j));
        }
        d_desc
    }
}

/// Attention-weighted mean of the descriptors: `(1/s) Σ_j a_j F_j`.
pub fn weighted_mean<T: Real>(descriptors: &Matrix<T>, weights: &[T]) -> Vec<T> {
    let s = T::from_usize_lossy(descriptors.rows());
    let mut out = vec![T::zero(); descriptors.cols()];
    for (row, &a) in descriptors.row_iter().zip(weights) {
        axpy(a / s, row, &mut out);
    }
    out
}

/// Backward of `weighted_mean`: returns `(dL/dF, dL/da)`.
pub fn weighted_mean_backward<T: Real>(descriptors: &Matrix<T>, weights: &[T], d_out: &[T]) -> (Matrix<T>, Vec<T>) {
    let s = T::from_usize_lossy(descriptors.rows());
    let mut d_desc = Matrix::zeros(descriptors.rows(), descriptors.cols());
    let mut d_weights = Vec::with_capacity(weights.len());
    for (j, &a) in weights.iter().enumerate() {
        d_weights.push(dot(descriptors.row(j), d_out) / s);
        axpy(a / s, d_out, d_desc.row_mut(j));
    }
    (d_desc, d_weights)
}
