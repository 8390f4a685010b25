//! Kernel SVM trained by sequential minimal optimization with second-order working-set
//! selection, combined one-vs-one for multi-class problems.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

/// Gaussian (RBF) kernel `exp(-gamma ||x - z||^2)`.
pub fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// `1 / (2 m^2)` for the median `m` of pairwise Euclidean distances; 1 when the median is 0.
pub fn median_gamma(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(d2.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let m = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if m > 0.0 {
        1.0 / (2.0 * m * m)
    } else {
        1.0
    }
}

/// Binary soft-margin SVM dual solution on a precomputed kernel.
struct BinarySvm {
    /// `alpha_i y_i` per training row
    coef: Vec<f64>,
    rho: f64,
}

impl BinarySvm {
    /// `y` holds ±1 labels; rows of `k` index training examples.
    fn fit(k: &Matrix<f64>, y: &[f64], c: f64, eps: f64, max_iter: usize) -> Self {
        let n = y.len();
        let mut a = vec![0.0; n];
        let mut g = vec![-1.0; n];
        for _ in 0..max_iter {
            let Some((i, j)) = select_working_set(k, y, &a, &g, c, eps) else {
                break;
            };
            let (old_i, old_j) = (a[i], a[j]);
            let quad = (k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j)).max(TAU);
            if y[i] != y[j] {
                let delta = (-g[i] - g[j]) / quad;
                let diff = a[i] - a[j];
                a[i] += delta;
                a[j] += delta;
                if diff > 0.0 {
                    if a[j] < 0.0 {
                        a[j] = 0.0;
                        a[i] = diff;
                    }
                } else if a[i] < 0.0 {
                    a[i] = 0.0;
                    a[j] = -diff;
                }
                if diff > 0.0 {
                    if a[i] > c {
                        a[i] = c;
                        a[j] = c - diff;
                    }
                } else if a[j] > c {
                    a[j] = c;
                    a[i] = c + diff;
                }
            } else {
                let delta = (g[i] - g[j]) / quad;
                let sum = a[i] + a[j];
                a[i] -= delta;
                a[j] += delta;
                if sum > c {
                    if a[i] > c {
                        a[i] = c;
                        a[j] = sum - c;
                    }
                } else if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = sum;
                }
                if sum > c {
                    if a[j] > c {
                        a[j] = c;
                        a[i] = sum - c;
                    }
                } else if a[i] < 0.0 {
                    a[i] = 0.0;
                    a[j] = sum;
                }
            }
            let (di, dj) = (a[i] - old_i, a[j] - old_j);
            for t in 0..n {
                g[t] += y[t] * (y[i] * k.get(t, i) * di + y[j] * k.get(t, j) * dj);
            }
        }
        let rho = compute_rho(y, &a, &g, c);
        Self {
            coef: a.iter().zip(y).map(|(a, y)| a * y).collect(),
            rho,
        }
    }

    /// Decision value from the kernel row `k(x_t, x)` over training rows.
    fn decision(&self, k_row: &[f64]) -> f64 {
        self.coef.iter().zip(k_row).map(|(c, k)| c * k).sum::<f64>() - self.rho
    }
}

fn select_working_set(k: &Matrix<f64>, y: &[f64], a: &[f64], g: &[f64], c: f64, eps: f64) -> Option<(usize, usize)> {
    let mut gmax = f64::NEG_INFINITY;
    let mut i = None;
    for t in 0..y.len() {
        let v = -y[t] * g[t];
        let up = if y[t] > 0.0 { a[t] < c } else { a[t] > 0.0 };
        if up && v >= gmax {
            gmax = v;
            i = Some(t);
        }
    }
    let i = i?;
    let mut gmax2 = f64::NEG_INFINITY;
    let mut obj_min = f64::INFINITY;
    let mut j = None;
    for t in 0..y.len() {
        let low = if y[t] > 0.0 { a[t] > 0.0 } else { a[t] < c };
        if !low {
            continue;
        }
        let v = y[t] * g[t];
        gmax2 = gmax2.max(v);
        let grad_diff = gmax + v;
        if grad_diff > 0.0 {
            let quad = (k.get(i, i) + k.get(t, t) - 2.0 * k.get(i, t)).max(TAU);
            let obj = -grad_diff * grad_diff / quad;
            if obj <= obj_min {
                obj_min = obj;
                j = Some(t);
            }
        }
    }
    if gmax + gmax2 < eps {
        return None;
    }
    j.map(|j| (i, j))
}

fn compute_rho(y: &[f64], a: &[f64], g: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * g[t];
        if a[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One-vs-one RBF SVM over integer class labels.
pub struct SvmClassifier {
    train: Vec<Vec<f64>>,
    classes: Vec<usize>,
    /// `(class_a, class_b, training rows, model)` with `a < b`
    pairs: Vec<(usize, usize, Vec<usize>, BinarySvm)>,
    pub gamma: f64,
}

impl SvmClassifier {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], c: f64, gamma: f64) -> Result<Self> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::Shape(format!("{} rows for {} labels", rows.len(), labels.len())));
        }
        if !(c > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("C and gamma must be positive, got {c} and {gamma}")));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidArgument("SVM training data holds a single class".into()));
        }
        let n = rows.len();
        let kernel = Matrix::from_fn(n, n, |i, j| rbf(&rows[i], &rows[j], gamma));
        let mut pairs = Vec::new();
        for (ai, &ca) in classes.iter().enumerate() {
            for &cb in &classes[ai + 1..] {
                let idx: Vec<usize> = (0..n).filter(|&t| labels[t] == ca || labels[t] == cb).collect();
                let y: Vec<f64> = idx.iter().map(|&t| if labels[t] == ca { 1.0 } else { -1.0 }).collect();
                let sub = Matrix::from_fn(idx.len(), idx.len(), |i, j| kernel.get(idx[i], idx[j]));
                let model = BinarySvm::fit(&sub, &y, c, 1e-3, 100_000);
                pairs.push((ca, cb, idx, model));
            }
        }
        Ok(Self {
            train: rows.to_vec(),
            classes,
            pairs,
            gamma,
        })
    }

    /// Majority vote over pairwise decisions; ties go to the lower class.
    pub fn predict(&self, x: &[f64]) -> usize {
        let k: Vec<f64> = self.train.iter().map(|r| rbf(r, x, self.gamma)).collect();
        let mut votes = vec![0usize; self.classes.len()];
        for (ca, cb, idx, model) in &self.pairs {
            let row: Vec<f64> = idx.iter().map(|&t| k[t]).collect();
            let winner = if model.decision(&row) > 0.0 { ca } else { cb };
            votes[self.classes.iter().position(|c| c == winner).expect("known class")] += 1;
        }
        let best = votes.iter().copied().max().unwrap_or(0);
        self.classes[votes.iter().position(|&v| v == best).unwrap_or(0)]
    }
}
