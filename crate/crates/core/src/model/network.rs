use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{argmax_class, softmax};
use crate::matrix::{axpy, Matrix};
use crate::model::attention::{weighted_mean, weighted_mean_backward, Attention, AttentionTrace};
use crate::model::encoder::{Activation, BackboneEncoder, ConvEncoder};
use crate::scalar::Real;
use crate::sdfm::Section;
use crate::segmentation::SegmentedTensor;
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framing {
    Classification,
    Regression,
}

impl Framing {
    pub fn outputs(self) -> usize {
        match self {
            Framing::Classification => NUM_CLASSES,
            Framing::Regression => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Framing::Classification => "classification",
            Framing::Regression => "regression",
        }
    }
}

/// Attention-pooled descriptor of one stream and the segment weights that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamEmbedding<T> {
    pub embedding: Vec<T>,
    pub attention: Vec<T>,
}

/// Everything one stream's backward pass needs.
pub struct StreamTrace<T, C> {
    descriptors: Matrix<T>,
    caches: Vec<C>,
    attention: AttentionTrace<T>,
    embedding: Vec<T>,
}

impl<T, C> StreamTrace<T, C> {
    pub fn attention_weights(&self) -> &[T] {
        &self.attention.weights
    }

    pub fn embedding(&self) -> &[T] {
        &self.embedding
    }
}

fn stream_trace<T: Real, E: BackboneEncoder<T>>(
    x: &SegmentedTensor<T>,
    encoder: &E,
    attention: &Attention<T>,
) -> Result<StreamTrace<T, E::Cache>> {
    if x.dim() != encoder.input_dim() {
        return Err(Error::Shape(format!(
            "stream input has {} features, encoder expects {}",
            x.dim(),
            encoder.input_dim()
        )));
    }
    if x.segments() != attention.segments() || encoder.descriptor_len() != attention.descriptor_len() {
        return Err(Error::Shape(format!(
            "{} segments / {} channels do not match attention over {} segments / {} channels",
            x.segments(),
            encoder.descriptor_len(),
            attention.segments(),
            attention.descriptor_len()
        )));
    }
    let c = encoder.descriptor_len();
    let mut descriptors = Matrix::zeros(x.segments(), c);
    let mut caches = Vec::with_capacity(x.segments());
    for j in 0..x.segments() {
        let (d, cache) = encoder.encode(x.segment(j), x.segment_len())?;
        descriptors.row_mut(j).copy_from_slice(&d);
        caches.push(cache);
    }
    let att = attention.trace(&descriptors)?;
    let embedding = weighted_mean(&descriptors, &att.weights);
    Ok(StreamTrace {
        descriptors,
        caches,
        attention: att,
        embedding,
    })
}

fn stream_backward<T: Real, E: BackboneEncoder<T>>(
    x: &SegmentedTensor<T>,
    encoder: &E,
    attention: &Attention<T>,
    trace: &StreamTrace<T, E::Cache>,
    d_embedding: &[T],
    grad_encoder: &mut E,
    grad_attention: &mut Attention<T>,
) {
    let (mut d_desc, d_weights) = weighted_mean_backward(&trace.descriptors, &trace.attention.weights, d_embedding);
    let d_from_att = attention.backward(&trace.descriptors, &trace.attention, &d_weights, grad_attention);
    for (d, extra) in d_desc.as_mut_slice().iter_mut().zip(d_from_att.as_slice()) {
        *d += *extra;
    }
    for j in 0..x.segments() {
        encoder.backward(x.segment(j), x.segment_len(), &trace.caches[j], d_desc.row(j), grad_encoder);
    }
}

/// Encodes each segment, weights the descriptors by attention and averages them.
pub fn stream_embed<T: Real, E: BackboneEncoder<T>>(
    x: &SegmentedTensor<T>,
    encoder: &E,
    attention: &Attention<T>,
) -> Result<StreamEmbedding<T>> {
    let t = stream_trace(x, encoder, attention)?;
    Ok(StreamEmbedding {
        embedding: t.embedding,
        attention: t.attention.weights,
    })
}

/// Linear layer over the concatenated stream embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionHead<T> {
    /// `outputs x (c_audio + c_visual)`
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub framing: Framing,
}

impl<T: Real> FusionHead<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![T::zero(); self.bias.len()],
            framing: self.framing,
        }
    }
}

/// Network output for one example.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelOutput<T> {
    /// softmax over the 7 score classes
    Probabilities(Vec<T>),
    /// unbounded regression estimate of the score
    Score(T),
}

/// Maps a network output to a score class `1..=7`: the arg-max (lower class on ties) for
/// probabilities, half-away-from-zero rounding clamped to `1..=7` for regression.
pub fn predict_class<T: Real>(output: &ModelOutput<T>) -> Result<usize> {
    match output {
        ModelOutput::Probabilities(p) => {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("class probabilities".into()));
            }
            Ok(argmax_class(p))
        }
        ModelOutput::Score(v) => {
            if !v.is_finite() {
                return Err(Error::NonFinite("regression output".into()));
            }
            // f64::round rounds half away from zero
            let r = v.to_f64_lossy().round().clamp(1.0, NUM_CLASSES as f64);
            Ok(r as usize)
        }
    }
}

/// Architecture of the stub-encoder network built by [`Network::init`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub audio_segments: usize,
    pub visual_segments: usize,
    pub channels: usize,
    pub audio_kernel: usize,
    pub visual_kernel: usize,
    /// visual stream consumes precomputed frame vectors through a linear lift
    pub visual_bypass: bool,
    pub framing: Framing,
}

/// Two-stream temporal attention network with late fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T, A = ConvEncoder<T>, V = ConvEncoder<T>> {
    pub audio_encoder: A,
    pub audio_attention: Attention<T>,
    pub visual_encoder: V,
    pub visual_attention: Attention<T>,
    pub head: FusionHead<T>,
}

/// Intermediates of one forward pass.
pub struct NetworkTrace<T, CA, CV> {
    pub audio: StreamTrace<T, CA>,
    pub visual: StreamTrace<T, CV>,
    fused: Vec<T>,
}

impl<T: Real> Network<T> {
    /// Stub-encoder network with seeded initialization.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = spec.channels;
        let audio_encoder = ConvEncoder::new(spec.audio_dim, c, spec.audio_kernel, Activation::Tanh, &mut rng);
        let audio_attention = Attention::new(spec.audio_segments, c, &mut rng);
        let visual_encoder = if spec.visual_bypass {
            ConvEncoder::bypass(spec.visual_dim, c, &mut rng)
        } else {
            ConvEncoder::new(spec.visual_dim, c, spec.visual_kernel, Activation::Tanh, &mut rng)
        };
        let visual_attention = Attention::new(spec.visual_segments, c, &mut rng);
        let outputs = spec.framing.outputs();
        let bound = (6.0 / (2 * c + outputs) as f64).sqrt();
        let weight = Matrix::from_fn(outputs, 2 * c, |_, _| T::lit(rand::Rng::random_range(&mut rng, -bound..bound)));
        let bias = match spec.framing {
            Framing::Classification => vec![T::zero(); outputs],
            // start regression at the middle of the 1..7 scale
            Framing::Regression => vec![T::lit(4.0)],
        };
        Self {
            audio_encoder,
            audio_attention,
            visual_encoder,
            visual_attention,
            head: FusionHead {
                weight,
                bias,
                framing: spec.framing,
            },
        }
    }
}

impl<T: Real, A: BackboneEncoder<T>, V: BackboneEncoder<T>> Network<T, A, V> {
    pub fn from_parts(
        audio_encoder: A,
        audio_attention: Attention<T>,
        visual_encoder: V,
        visual_attention: Attention<T>,
        head: FusionHead<T>,
    ) -> Result<Self> {
        let fused = audio_encoder.descriptor_len() + visual_encoder.descriptor_len();
        if head.weight.cols() != fused || head.weight.rows() != head.framing.outputs() || head.bias.len() != head.weight.rows() {
            return Err(Error::Shape(format!(
                "head is {}x{} (+{} bias) but the streams fuse to {fused} features for {} outputs",
                head.weight.rows(),
                head.weight.cols(),
                head.bias.len(),
                head.framing.outputs()
            )));
        }
        Ok(Self {
            audio_encoder,
            audio_attention,
            visual_encoder,
            visual_attention,
            head,
        })
    }

    pub fn framing(&self) -> Framing {
        self.head.framing
    }

    pub fn forward_trace(
        &self,
        audio: &SegmentedTensor<T>,
        visual: &SegmentedTensor<T>,
    ) -> Result<(Vec<T>, NetworkTrace<T, A::Cache, V::Cache>)> {
        let a = stream_trace(audio, &self.audio_encoder, &self.audio_attention)?;
        let v = stream_trace(visual, &self.visual_encoder, &self.visual_attention)?;
        let mut fused = a.embedding.clone();
        fused.extend_from_slice(&v.embedding);
        let mut out = self.head.weight.mul_vec(&fused);
        out.iter_mut().zip(&self.head.bias).for_each(|(o, &b)| *o += b);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network activations".into()));
        }
        Ok((out, NetworkTrace { audio: a, visual: v, fused }))
    }

    /// Pre-softmax logits (classification) or the regression value, before any squashing.
    pub fn raw_outputs(&self, audio: &SegmentedTensor<T>, visual: &SegmentedTensor<T>) -> Result<Vec<T>> {
        Ok(self.forward_trace(audio, visual)?.0)
    }

    pub fn forward(&self, audio: &SegmentedTensor<T>, visual: &SegmentedTensor<T>) -> Result<ModelOutput<T>> {
        let raw = self.raw_outputs(audio, visual)?;
        Ok(match self.framing() {
            Framing::Classification => ModelOutput::Probabilities(softmax(&raw)),
            Framing::Regression => ModelOutput::Score(raw[0]),
        })
    }

    pub fn predict(&self, audio: &SegmentedTensor<T>, visual: &SegmentedTensor<T>) -> Result<usize> {
        predict_class(&self.forward(audio, visual)?)
    }

    /// Accumulates into `grad` the gradient of a scalar objective whose derivative with
    /// respect to the raw outputs is `d_outputs`.
    pub fn backward(
        &self,
        audio: &SegmentedTensor<T>,
        visual: &SegmentedTensor<T>,
        trace: &NetworkTrace<T, A::Cache, V::Cache>,
        d_outputs: &[T],
        grad: &mut Self,
    ) {
        for (o, &d) in d_outputs.iter().enumerate() {
            grad.head.bias[o] += d;
            axpy(d, &trace.fused, grad.head.weight.row_mut(o));
        }
        let d_fused = self.head.weight.tr_mul_vec(d_outputs);
        let ca = self.audio_encoder.descriptor_len();
        stream_backward(
            audio,
            &self.audio_encoder,
            &self.audio_attention,
            &trace.audio,
            &d_fused[..ca],
            &mut grad.audio_encoder,
            &mut grad.audio_attention,
        );
        stream_backward(
            visual,
            &self.visual_encoder,
            &self.visual_attention,
            &trace.visual,
            &d_fused[ca..],
            &mut grad.visual_encoder,
            &mut grad.visual_attention,
        );
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            audio_encoder: self.audio_encoder.zeros_like(),
            audio_attention: self.audio_attention.zeros_like(),
            visual_encoder: self.visual_encoder.zeros_like(),
            visual_attention: self.visual_attention.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Named parameter tensors; `backbone` marks encoder parameters.
    pub fn tensors(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        for (name, t) in self.audio_encoder.tensors() {
            out.push(ParamRef::new(format!("audio_encoder.{name}"), true, t));
        }
        out.push(ParamRef::new("audio_attention.w1".into(), false, self.audio_attention.w1.as_slice()));
        out.push(ParamRef::new("audio_attention.w2".into(), false, &self.audio_attention.w2));
        for (name, t) in self.visual_encoder.tensors() {
            out.push(ParamRef::new(format!("visual_encoder.{name}"), true, t));
        }
        out.push(ParamRef::new("visual_attention.w1".into(), false, self.visual_attention.w1.as_slice()));
        out.push(ParamRef::new("visual_attention.w2".into(), false, &self.visual_attention.w2));
        out.push(ParamRef::new("head.weight".into(), false, self.head.weight.as_slice()));
        out.push(ParamRef::new("head.bias".into(), false, &self.head.bias));
        out
    }

    /// Mutable view in the same order as [`Network::tensors`], as `(backbone, values)`.
    pub fn tensors_mut(&mut self) -> Vec<(bool, &mut [T])> {
        let mut out: Vec<(bool, &mut [T])> = Vec::new();
        for (_, t) in self.audio_encoder.tensors_mut() {
            out.push((true, t));
        }
        out.push((false, self.audio_attention.w1.as_mut_slice()));
        out.push((false, &mut self.audio_attention.w2));
        for (_, t) in self.visual_encoder.tensors_mut() {
            out.push((true, t));
        }
        out.push((false, self.visual_attention.w1.as_mut_slice()));
        out.push((false, &mut self.visual_attention.w2));
        out.push((false, self.head.weight.as_mut_slice()));
        out.push((false, &mut self.head.bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|p| p.values.len()).sum()
    }

    /// All parameters flattened in [`Network::tensors`] order.
    pub fn flat_parameters(&self) -> Vec<T> {
        self.tensors().iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Parameters as `f64` SDFM sections named like [`Network::tensors`].
    pub fn to_sections(&self) -> Vec<Section> {
        self.tensors()
            .into_iter()
            .map(|p| {
                let v: Vec<f64> = p.values.iter().map(|x| x.to_f64_lossy()).collect();
                Section::f64(p.name, 1, v.len(), v)
            })
            .collect()
    }

    /// Loads parameters saved by [`Network::to_sections`] into a network of the same shape.
    pub fn load_sections(&mut self, sections: &[Section]) -> Result<()> {
        let names: Vec<String> = self.tensors().into_iter().map(|p| p.name).collect();
        for (name, (_, dst)) in names.iter().zip(self.tensors_mut()) {
            let sec = crate::sdfm::find_section(sections, name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
            let (_, _, values) = sec
                .as_f64()
                .ok_or_else(|| Error::Config(format!("tensor {name} is not numeric")))?;
            if values.len() != dst.len() {
                return Err(Error::Shape(format!(
                    "tensor {name}: checkpoint has {} values, network {}",
                    values.len(),
                    dst.len()
                )));
            }
            for (d, v) in dst.iter_mut().zip(values) {
                *d = T::lit(v);
            }
        }
        Ok(())
    }
}

pub struct ParamRef<'a, T> {
    pub name: String,
    pub backbone: bool,
    pub values: &'a [T],
}

impl<'a, T> ParamRef<'a, T> {
    fn new(name: String, backbone: bool, values: &'a [T]) -> Self {
        Self { name, backbone, values }
    }
}
