mod common;

use common::*;
use disclosure_core::losses::{LossConfig, LossKind};
use disclosure_core::matrix::Matrix;
use disclosure_core::model::{weighted_mean, Attention, Framing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn top_two_gap(row: &[f64]) -> f64 {
    let mut v = row.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[0] - v[1]
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in [LossKind::Ce, LossKind::CeLs, LossKind::Mse, LossKind::Spce] {
        let cfg = LossConfig::new(kind);
        let cols = if kind == LossKind::Mse { 1 } else { 7 };
        let mut checked = 0;
        while checked < 25 {
            let b = rng.random_range(1..6);
            let scale = if kind == LossKind::Mse { 4.0 } else { 3.0 };
            let out = Matrix::from_fn(b, cols, |_, _| rng.random_range(-scale..scale));
            if kind == LossKind::Spce && out.row_iter().any(|r| top_two_gap(r) < 1e-3) {
                continue;
            }
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(1..=7)).collect();
            let (_, analytic) = cfg.value_and_grad(&out, &labels).unwrap();
            let numeric = numeric_gradient(
                |x| cfg.value(&Matrix::from_vec(b, cols, x.to_vec()).unwrap(), &labels).unwrap(),
                out.as_slice(),
                1e-6,
            );
            let err = relative_error(analytic.as_slice(), &numeric);
            assert!(err < TOL, "{kind:?}: relative error {err}");
            checked += 1;
        }
    }
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (s, c) = (4, 5);
        let att = Attention::<f64>::new(s, c, &mut rng);
        let f = Matrix::from_fn(s, c, |_, _| rng.random_range(-1.0..1.0));
        let probe: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..1.0)).collect();
        // objective: probe . weights
        let trace = att.trace(&f).unwrap();
        let mut grad = att.zeros_like();
        let d_f = att.backward(&f, &trace, &probe, &mut grad);
        let objective = |w1: &[f64], w2: &[f64], fv: &[f64]| {
            let a = Attention {
                w1: Matrix::from_vec(s, s, w1.to_vec()).unwrap(),
                w2: w2.to_vec(),
            };
            let weights = a.forward(&Matrix::from_vec(s, c, fv.to_vec()).unwrap()).unwrap();
            weights.iter().zip(&probe).map(|(a, p)| a * p).sum::<f64>()
        };
        let n_w1 = numeric_gradient(|x| objective(x, &att.w2, f.as_slice()), att.w1.as_slice(), 1e-6);
        let n_w2 = numeric_gradient(|x| objective(att.w1.as_slice(), x, f.as_slice()), &att.w2, 1e-6);
        let n_f = numeric_gradient(|x| objective(att.w1.as_slice(), &att.w2, x), f.as_slice(), 1e-6);
        assert!(relative_error(grad.w1.as_slice(), &n_w1) < TOL);
        assert!(relative_error(&grad.w2, &n_w2) < TOL);
        assert!(relative_error(d_f.as_slice(), &n_f) < TOL);
        // weighted mean is linear: its value at unit weights is the plain mean
        let mean = weighted_mean(&f, &vec![1.0; s]);
        for (j, m) in mean.iter().enumerate() {
            let plain: f64 = (0..s).map(|i| f.get(i, j)).sum::<f64>() / s as f64;
            assert!((m - plain).abs() < 1e-12);
        }
    }
}

fn check_network(kind: LossKind, framing: Framing, bypass: bool) {
    let cfg = LossConfig::new(kind);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let case = grad_case(seed, framing, bypass);
        if kind == LossKind::Spce && case.outputs(&case.net).row_iter().any(|r| top_two_gap(r) < 1e-3) {
            continue;
        }
        let (analytic, numeric) = case.gradients(&cfg);
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOL, "{kind:?} bypass={bypass} seed {seed}: relative error {err}");
        checked += 1;
    }
}

#[test]
fn network_gradients_cross_entropy() {
    check_network(LossKind::Ce, Framing::Classification, false);
}

#[test]
fn network_gradients_label_smoothing() {
    check_network(LossKind::CeLs, Framing::Classification, false);
}

#[test]
fn network_gradients_spce() {
    check_network(LossKind::Spce, Framing::Classification, false);
}

#[test]
fn network_gradients_regression() {
    check_network(LossKind::Mse, Framing::Regression, false);
}

#[test]
fn network_gradients_bypass_visual() {
    check_network(LossKind::Ce, Framing::Classification, true);
}
