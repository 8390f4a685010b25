use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot};
use crate::scalar::Real;

/// Trainable map from one segment (`frames x input_dim`, row-major) to a descriptor of
/// fixed length.
///
/// Implementations own their parameters; a zero-filled clone (`zeros_like`) doubles as
/// the gradient accumulator, so optimizers can walk parameters and gradients in lockstep
/// through `tensors` / `tensors_mut`.
pub trait BackboneEncoder<T: Real>: Clone + Send + Sync {
    type Cache: Send;

    fn input_dim(&self) -> usize;

    fn descriptor_len(&self) -> usize;

    fn encode(&self, segment: &[T], frames: usize) -> Result<(Vec<T>, Self::Cache)>;

    /// Accumulates parameter gradients into `grad` given `d_descriptor`.
    fn backward(&self, segment: &[T], frames: usize, cache: &Self::Cache, d_descriptor: &[T], grad: &mut Self);

    fn zeros_like(&self) -> Self;

    fn tensors(&self) -> Vec<(&'static str, &[T])>;

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// Temporal convolution over the frames of a segment (valid padding), pointwise
/// activation, then average pooling over the output positions.
///
/// With `kernel = 1` and `Activation::Identity` this is the bypass encoder for
/// precomputed per-frame vectors: a learned linear lift of the mean frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvEncoder<T> {
    input_dim: usize,
    channels: usize,
    kernel: usize,
    activation: Activation,
    /// `channels x (kernel * input_dim)`, each row laid out like a `kernel`-frame window
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvEncoder<T> {
    pub fn new<R: Rng>(input_dim: usize, channels: usize, kernel: usize, activation: Activation, rng: &mut R) -> Self {
        let fan_in = kernel * input_dim;
        let bound = (6.0 / (fan_in + channels) as f64).sqrt();
        let weight = (0..channels * fan_in)
            .map(|_| T::lit(rng.random_range(-bound..bound)))
            .collect();
        Self {
            input_dim,
            channels,
            kernel,
            activation,
            weight,
            bias: vec![T::zero(); channels],
        }
    }

    /// Linear lift of the mean frame (`kernel = 1`, no activation).
    pub fn bypass<R: Rng>(input_dim: usize, channels: usize, rng: &mut R) -> Self {
        Self::new(input_dim, channels, 1, Activation::Identity, rng)
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn window(&self) -> usize {
        self.kernel * self.input_dim
    }
}

/// Activations at every output position, `positions x channels`.
pub struct ConvCache<T> {
    act: Vec<T>,
    positions: usize,
}

impl<T: Real> BackboneEncoder<T> for ConvEncoder<T> {
    type Cache = ConvCache<T>;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn descriptor_len(&self) -> usize {
        self.channels
    }

    fn encode(&self, segment: &[T], frames: usize) -> Result<(Vec<T>, ConvCache<T>)> {
        if segment.len() != frames * self.input_dim {
            return Err(Error::Shape(format!(
                "segment of {} values is not {frames} frames of {}",
                segment.len(),
                self.input_dim
            )));
        }
        if frames < self.kernel {
            return Err(Error::Shape(format!(
                "segment of {frames} frames is shorter than the kernel ({})",
                self.kernel
            )));
        }
        let positions = frames - self.kernel + 1;
        let w = self.window();
        let mut act = Vec::with_capacity(positions * self.channels);
        let mut desc = vec![T::zero(); self.channels];
        for p in 0..positions {
            let x = &segment[p * self.input_dim..p * self.input_dim + w];
            for (o, d) in desc.iter_mut().enumerate() {
                let pre = self.bias[o] + dot(&self.weight[o * w..(o + 1) * w], x);
                let h = match self.activation {
                    Activation::Tanh => pre.tanh(),
                    Activation::Identity => pre,
                };
                act.push(h);
                *d += h;
            }
        }
        let scale = T::from_usize_lossy(positions);
        desc.iter_mut().for_each(|d| *d /= scale);
        Ok((desc, ConvCache { act, positions }))
    }

    fn backward(&self, segment: &[T], _frames: usize, cache: &ConvCache<T>, d_descriptor: &[T], grad: &mut Self) {
        let w = self.window();
        let scale = T::from_usize_lossy(cache.positions);
        for p in 0..cache.positions {
            let x = &segment[p * self.input_dim..p * self.input_dim + w];
            for o in 0..self.channels {
                let mut d = d_descriptor[o] / scale;
                if self.activation == Activation::Tanh {
                    let h = cache.act[p * self.channels + o];
                    d *= T::one() - h * h;
                }
                grad.bias[o] += d;
                axpy(d, x, &mut grad.weight[o * w..(o + 1) * w]);
            }
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
            ..*self
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &[T])> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}
