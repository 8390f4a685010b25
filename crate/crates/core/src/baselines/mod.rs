//! Gaussian-kernel SVM baselines over mean-pooled segment features with 3-fold
//! cross-validation.

mod svm;

pub use svm::{median_gamma, rbf, SvmClassifier};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SegmentRecord;
use crate::error::{Error, Result};
use crate::features::{interpolate_missing, mean_pool, savgol_smooth};
use crate::plot::{grouped_bar_chart, BarSeries};
use crate::sdfm;
use crate::training::{macro_f1, mean_sd};

pub const FOLDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    /// Soft-margin penalty.
    pub c: f64,
    /// Kernel width; `None` selects the median heuristic per fold.
    pub gamma: Option<f64>,
    pub savgol_window: usize,
    pub savgol_order: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            savgol_window: 11,
            savgol_order: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub feature_family: String,
    pub smoothed: bool,
    pub fold_f1: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub fold_gamma: Vec<f64>,
    pub c: f64,
    /// Features are standardized with training-fold statistics.
    pub standardized: bool,
}

/// Mean-pooled feature vector of one family of a record; `"audio"` names the audio file.
pub fn pooled_features(record: &SegmentRecord, family: &str, smoothed: bool, params: &SvmParams) -> Result<Vec<f64>> {
    let m = sdfm::read_feature_file::<f64>(record.family_path(family)?)?;
    let m = if m.fully_observed() { m } else { interpolate_missing(&m)? };
    let m = if smoothed {
        savgol_smooth(&m, params.savgol_window, params.savgol_order)?
    } else {
        m
    };
    m.ensure_finite()?;
    Ok(mean_pool(&m))
}

/// Deterministic partition of `0..n` into `FOLDS` disjoint, covering folds.
pub fn fold_assignment(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); FOLDS];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % FOLDS].push(idx);
    }
    folds
}

fn standardize(train: &[Vec<f64>], rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = train.len() as f64;
    let dim = train[0].len();
    let mut mean = vec![0.0; dim];
    for r in train {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; dim];
    for r in train {
        for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    rows.iter()
        .map(|r| r.iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s).collect())
        .collect()
}

/// 3-fold cross-validated macro F1 of an RBF SVM on precomputed feature vectors.
pub fn cross_validate(features: &[Vec<f64>], labels: &[usize], seed: u64, params: &SvmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows for {} labels", features.len(), labels.len())));
    }
    if features.len() < 3 * FOLDS {
        return Err(Error::InvalidArgument(format!(
            "need at least {} records for {FOLDS}-fold cross-validation, got {}",
            3 * FOLDS,
            features.len()
        )));
    }
    let folds = fold_assignment(features.len(), seed);
    let results: Vec<Result<(f64, f64)>> = (0..FOLDS)
        .into_par_iter()
        .map(|k| {
            let train_idx: Vec<usize> = (0..FOLDS).filter(|&f| f != k).flat_map(|f| folds[f].iter().copied()).collect();
            let train_raw: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
            let test_raw: Vec<Vec<f64>> = folds[k].iter().map(|&i| features[i].clone()).collect();
            let train = standardize(&train_raw, &train_raw);
            let test = standardize(&train_raw, &test_raw);
            let y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            let gamma = params.gamma.unwrap_or_else(|| median_gamma(&train));
            let svm = SvmClassifier::fit(&train, &y, params.c, gamma)
                .map_err(|e| Error::InvalidArgument(format!("fold {k}: {e}")))?;
            let pred: Vec<usize> = test.iter().map(|r| svm.predict(r)).collect();
            let truth: Vec<usize> = folds[k].iter().map(|&i| labels[i]).collect();
            Ok((macro_f1(&truth, &pred)?, gamma))
        })
        .collect();
    let mut f1 = Vec::with_capacity(FOLDS);
    let mut gammas = Vec::with_capacity(FOLDS);
    for r in results {
        let (f, g) = r?;
        f1.push(f);
        gammas.push(g);
    }
    Ok((f1, gammas))
}

pub fn svm_baseline(records: &[SegmentRecord], family: &str, smoothed: bool, seed: u64, params: &SvmParams) -> Result<BaselineResult> {
    let features = records
        .par_iter()
        .map(|r| pooled_features(r, family, smoothed, params))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = records.iter().map(SegmentRecord::label).collect();
    let (fold_f1, fold_gamma) = cross_validate(&features, &labels, seed, params)?;
    let (mean, sd) = mean_sd(&fold_f1);
    Ok(BaselineResult {
        feature_family: family.into(),
        smoothed,
        fold_f1,
        mean,
        sd,
        fold_gamma,
        c: params.c,
        standardized: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub seed: u64,
    pub records: usize,
    pub params: SvmParams,
    pub results: Vec<BaselineResult>,
}

/// Every family with and without smoothing.
pub fn run_baselines(records: &[SegmentRecord], families: &[String], seed: u64, params: &SvmParams) -> Result<BaselineReport> {
    let mut results = Vec::with_capacity(families.len() * 2);
    for f in families {
        for smoothed in [false, true] {
            results.push(svm_baseline(records, f, smoothed, seed, params)?);
        }
    }
    Ok(BaselineReport {
        seed,
        records: records.len(),
        params: params.clone(),
        results,
    })
}

impl BaselineReport {
    /// `baseline.csv`, `baseline_summary.json` and `baseline_bars.png` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("baseline.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("baseline_summary.json");
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        self.plot(&dir.join("baseline_bars.png"))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["feature_family", "smoothed", "per_fold_f1", "mean_f1", "sd_f1", "standardized"])
            .map_err(to_err)?;
        for r in &self.results {
            let folds = r.fold_f1.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
            w.write_record([
                r.feature_family.clone(),
                r.smoothed.to_string(),
                folds,
                r.mean.to_string(),
                r.sd.to_string(),
                r.standardized.to_string(),
            ])
            .map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Grouped bars per family: unsmoothed and smoothed, sd error bars.
    pub fn plot(&self, path: &Path) -> Result<()> {
        let mut families: Vec<String> = Vec::new();
        for r in &self.results {
            if !families.contains(&r.feature_family) {
                families.push(r.feature_family.clone());
            }
        }
        let series = [false, true].map(|smoothed| {
            let pick = |f: &String| self.results.iter().find(|r| &r.feature_family == f && r.smoothed == smoothed);
            BarSeries {
                label: if smoothed { "smoothed" } else { "unsmoothed" }.into(),
                values: families.iter().map(|f| pick(f).map_or(f64::NAN, |r| r.mean)).collect(),
                errors: families.iter().map(|f| pick(f).map_or(0.0, |r| r.sd)).collect(),
            }
        });
        grouped_bar_chart(path, "SVM baseline macro F1", &families, &series, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_the_corpus() {
        let folds = fold_assignment(70, 3);
        assert_eq!(folds.len(), 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() >= 23));
        assert_eq!(folds, fold_assignment(70, 3));
    }

    #[test]
    fn standardization_uses_training_statistics() {
        let train = vec![vec![0.0, 5.0], vec![2.0, 5.0]];
        let out = standardize(&train, &[vec![4.0, 7.0]]);
        assert_eq!(out, vec![vec![3.0, 2.0]]);
    }

    #[test]
    fn too_few_records() {
        let f = vec![vec![0.0]; 5];
        assert!(cross_validate(&f, &[1, 2, 1, 2, 1], 0, &SvmParams::default()).is_err());
    }
}
