use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::sampler_weights_for_labels;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{BackboneEncoder, Network};
use crate::scalar::Real;

use super::{evaluate_predictions, AblationConfig, Adam, Evaluation, Example, PreparedData};

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    /// Mean training loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub train: Evaluation,
    pub test: Evaluation,
}

#[derive(Clone, Debug)]
pub struct TrainedRun<T> {
    pub network: Network<T>,
    pub outcome: RunOutcome,
}

pub fn predict_all<T: Real, A: BackboneEncoder<T>, V: BackboneEncoder<T>>(
    net: &Network<T, A, V>,
    examples: &[Example<T>],
) -> Result<Vec<usize>> {
    examples.par_iter().map(|e| net.predict(&e.audio, &e.visual)).collect()
}

/// Macro F1 and confusion matrix of `net` on `examples`.
pub fn evaluate_f1<T: Real, A: BackboneEncoder<T>, V: BackboneEncoder<T>>(
    net: &Network<T, A, V>,
    examples: &[Example<T>],
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty example list".into()));
    }
    let pred = predict_all(net, examples)?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    evaluate_predictions(&truth, &pred)
}

/// Trains a fresh network for `cfg.epochs` epochs of `ceil(|train| / batch)` Adam steps on
/// mini-batches drawn with replacement under inverse class-frequency weights, then evaluates
/// the final parameters on both sides of the split.
pub fn train_one<T: Real>(cfg: &AblationConfig, data: &PreparedData<T>, seed: u64) -> Result<TrainedRun<T>> {
    cfg.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::InvalidArgument("train and test sides must both be non-empty".into()));
    }
    let spec = cfg.network_spec(data.audio_dim, data.visual_dim);
    let mut net = Network::<T>::init(&spec, seed);
    let mut adam = Adam::new(&net, cfg.learning_rate);
    let sampler = sampler_weights_for_labels(&data.train_labels())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let n = data.train.len();
    let outputs = cfg.framing.outputs();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = sampler.draw(n, &mut rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |loss: f64| Error::Diverged { epoch, step, loss };
            let mut out = Matrix::zeros(batch.len(), outputs);
            let mut traces = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for (row, &i) in batch.iter().enumerate() {
                let e = &data.train[i];
                let (o, trace) = net.forward_trace(&e.audio, &e.visual).map_err(|err| match err {
                    Error::NonFinite(_) => diverged(f64::NAN),
                    other => other,
                })?;
                out.row_mut(row).copy_from_slice(&o);
                traces.push(trace);
                labels.push(e.label);
            }
            let (loss, d_out) = cfg.loss.value_and_grad(&out, &labels)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            let mut grad = net.zeros_like();
            for (row, (&i, trace)) in batch.iter().zip(&traces).enumerate() {
                let e = &data.train[i];
                net.backward(&e.audio, &e.visual, trace, d_out.row(row), &mut grad);
            }
            adam.step(&mut net, &grad, cfg.freeze_backbone);
            total += loss * batch.len() as f64;
        }
        loss_curve.push(total / n as f64);
    }
    let outcome = RunOutcome {
        seed,
        epochs: cfg.epochs,
        steps: adam.steps_taken() as usize,
        loss_curve,
        train: evaluate_f1(&net, &data.train)?,
        test: evaluate_f1(&net, &data.test)?,
    };
    Ok(TrainedRun { network: net, outcome })
}
