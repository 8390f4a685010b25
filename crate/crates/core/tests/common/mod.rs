#![allow(dead_code)]

use disclosure_core::losses::LossConfig;
use disclosure_core::matrix::Matrix;
use disclosure_core::model::{Framing, Network, NetworkSpec};
use disclosure_core::segmentation::SegmentedTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// `-ln softmax(z)_y` evaluated directly.
pub fn naive_ce(logits: &[f64], label: usize) -> f64 {
    let denom: f64 = logits.iter().map(|z| z.exp()).sum();
    -(logits[label - 1].exp() / denom).ln()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, s: usize, len: usize, n: usize) -> SegmentedTensor<f64> {
    let data = (0..s * len * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    SegmentedTensor::from_parts(data, s, len, n).unwrap()
}

pub struct GradCase {
    pub net: Network<f64>,
    pub batch: Vec<(SegmentedTensor<f64>, SegmentedTensor<f64>, usize)>,
}

/// Small stub-encoder network and a 3-example batch.
pub fn grad_case(seed: u64, framing: Framing, visual_bypass: bool) -> GradCase {
    let spec = NetworkSpec {
        audio_dim: 3,
        visual_dim: 4,
        audio_segments: 2,
        visual_segments: 3,
        channels: 5,
        audio_kernel: 2,
        visual_kernel: 2,
        visual_bypass,
        framing,
    };
    let net = Network::<f64>::init(&spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919));
    let batch = (0..3)
        .map(|_| {
            let a = random_tensor(&mut rng, 2, 4, 3);
            let v = random_tensor(&mut rng, 3, 3, 4);
            (a, v, rng.random_range(1..=7))
        })
        .collect();
    GradCase { net, batch }
}

impl GradCase {
    pub fn outputs(&self, net: &Network<f64>) -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = self.batch.iter().map(|(a, v, _)| net.raw_outputs(a, v).unwrap()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.batch.iter().map(|b| b.2).collect()
    }

    /// Analytic and finite-difference parameter gradients of the batch loss.
    pub fn gradients(&self, loss: &LossConfig) -> (Vec<f64>, Vec<f64>) {
        let labels = self.labels();
        let mut grad = self.net.zeros_like();
        let mut rows = Vec::new();
        let mut traces = Vec::new();
        for (a, v, _) in &self.batch {
            let (o, t) = self.net.forward_trace(a, v).unwrap();
            rows.push(o);
            traces.push(t);
        }
        let (_, d_out) = loss.value_and_grad(&Matrix::from_rows(&rows).unwrap(), &labels).unwrap();
        for (i, ((a, v, _), t)) in self.batch.iter().zip(&traces).enumerate() {
            self.net.backward(a, v, t, d_out.row(i), &mut grad);
        }
        let analytic = grad.flat_parameters();
        let base = self.net.flat_parameters();
        let numeric = numeric_gradient(
            |p| {
                let mut net = self.net.clone();
                net.set_flat_parameters(p).unwrap();
                loss.value(&self.outputs(&net), &labels).unwrap()
            },
            &base,
            1e-6,
        );
        (analytic, numeric)
    }
}

/// Least-squares one-vs-rest linear probe: fits one-hot targets with a bias column by
/// normal equations (ridge 1e-9) and predicts the arg-max, classes `1..=7`.
pub fn linear_probe(train: &[Vec<f64>], train_y: &[usize], test: &[Vec<f64>]) -> Vec<usize> {
    let d = train[0].len() + 1;
    let aug = |x: &Vec<f64>| {
        let mut v = x.clone();
        v.push(1.0);
        v
    };
    let xs: Vec<Vec<f64>> = train.iter().map(aug).collect();
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![vec![0.0; 7]; d];
    for (x, &y) in xs.iter().zip(train_y) {
        for i in 0..d {
            for j in 0..d {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i][y - 1] += x[i];
        }
    }
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += 1e-9;
    }
    // Gauss-Jordan on [XtX | XtY]
    let mut m: Vec<Vec<f64>> = xtx.iter().zip(&xty).map(|(a, b)| a.iter().chain(b).copied().collect()).collect();
    for col in 0..d {
        let piv = (col..d).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..d {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let w: Vec<Vec<f64>> = m.iter().map(|r| r[d..].to_vec()).collect();
    test.iter()
        .map(|x| {
            let x = aug(x);
            let scores: Vec<f64> = (0..7).map(|k| (0..d).map(|i| x[i] * w[i][k]).sum()).collect();
            let mut best = 0;
            for k in 1..7 {
                if scores[k] > scores[best] {
                    best = k;
                }
            }
            best + 1
        })
        .collect()
}

/// Macro F1 computed from scratch: per-class precision and recall, classes absent from both
/// truth and predictions skipped.
pub fn reference_macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for k in 1..=7 {
        let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == k && p == k).count() as f64;
        let actual = truth.iter().filter(|&&t| t == k).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == k).count() as f64;
        if actual == 0.0 && predicted == 0.0 {
            continue;
        }
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
        count += 1;
    }
    sum / count as f64
}
