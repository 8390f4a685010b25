use crate::corpus::{CorpusSplit, SegmentRecord, FACE};
use crate::error::{Error, Result};
use crate::features::{apply_pca, cmvn, concat_columns, fit_pca, interpolate_missing, savgol_smooth, FeatureMatrix, Modality, PcaModel};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::sdfm;
use crate::segmentation::{prepare_stream, SegmentedTensor};

use super::{AblationConfig, FeatureSet};

/// One network input pair with its score.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub segment_id: String,
    pub audio: SegmentedTensor<T>,
    pub visual: SegmentedTensor<T>,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct PreparedData<T> {
    pub train: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
    /// Present for `pca_fused`, fit on the training side only.
    pub pca: Option<PcaModel<T>>,
    pub audio_dim: usize,
    pub visual_dim: usize,
}

impl<T: Real> PreparedData<T> {
    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|e| e.label).collect()
    }
}

pub fn load_audio<T: Real>(record: &SegmentRecord, cfg: &AblationConfig) -> Result<FeatureMatrix<T>> {
    let m = sdfm::read_feature_file::<T>(&record.audio_feature_path)?;
    let m = if m.fully_observed() { m } else { interpolate_missing(&m)? };
    let m = if cfg.audio_cmvn { cmvn(&m)? } else { m };
    m.ensure_finite()?;
    Ok(m)
}

fn load_family<T: Real>(record: &SegmentRecord, family: &str, cfg: &AblationConfig) -> Result<FeatureMatrix<T>> {
    let m = sdfm::read_feature_file::<T>(record.visual_path(family)?)?;
    let m = if m.fully_observed() { m } else { interpolate_missing(&m)? };
    let m = if cfg.smooth {
        savgol_smooth(&m, cfg.savgol_window, cfg.savgol_order)?
    } else {
        m
    };
    m.ensure_finite()?;
    Ok(m)
}

fn pca_families(record: &SegmentRecord, cfg: &AblationConfig) -> Vec<String> {
    if cfg.pca_families.is_empty() {
        record.visual_feature_paths.keys().cloned().collect()
    } else {
        cfg.pca_families.clone()
    }
}

/// Interpolated (and optionally smoothed) visual features of the configured feature set,
/// before any PCA projection.
pub fn condition_visual<T: Real>(record: &SegmentRecord, cfg: &AblationConfig) -> Result<FeatureMatrix<T>> {
    match cfg.feature_set {
        FeatureSet::FaceOnly => load_family(record, FACE, cfg),
        FeatureSet::PcaFused => {
            let parts = pca_families(record, cfg)
                .iter()
                .map(|f| load_family::<T>(record, f, cfg))
                .collect::<Result<Vec<_>>>()?;
            let t = parts[0].frames();
            if parts.iter().any(|p| p.frames() != t) {
                return Err(Error::Shape(format!(
                    "segment {}: visual families disagree on frame count",
                    record.segment_id
                )));
            }
            let refs: Vec<&FeatureMatrix<T>> = parts.iter().collect();
            concat_columns(&refs, Modality::VisualPca)
        }
    }
}

/// Loads, conditions, crops and segments both streams of every record. For `pca_fused`
/// the projection is fit on all training frames and applied to both sides before cropping,
/// so zero padding stays zero in the projected space.
pub fn prepare_data<T: Real>(cfg: &AblationConfig, split: &CorpusSplit) -> Result<PreparedData<T>> {
    cfg.validate()?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidArgument("train and test sides must both be non-empty".into()));
    }
    let load = |records: &[SegmentRecord]| -> Result<Vec<(FeatureMatrix<T>, FeatureMatrix<T>)>> {
        records
            .iter()
            .map(|r| Ok((load_audio(r, cfg)?, condition_visual(r, cfg)?)))
            .collect()
    };
    let train_raw = load(&split.train)?;
    let test_raw = load(&split.test)?;

    let pca = if cfg.feature_set == FeatureSet::PcaFused {
        let dim = train_raw[0].1.dim();
        let mut rows = Vec::new();
        for (_, v) in &train_raw {
            rows.extend_from_slice(v.data.as_slice());
        }
        let stacked = Matrix::from_vec(rows.len() / dim, dim, rows)?;
        Some(fit_pca(&stacked, cfg.pca_variance)?)
    } else {
        None
    };

    let build = |records: &[SegmentRecord], raw: Vec<(FeatureMatrix<T>, FeatureMatrix<T>)>| -> Result<Vec<Example<T>>> {
        records
            .iter()
            .zip(raw)
            .map(|(r, (a, v))| {
                let v = match &pca {
                    Some(model) => apply_pca(model, &v)?,
                    None => v,
                };
                Ok(Example {
                    segment_id: r.segment_id.clone(),
                    audio: prepare_stream(&a, cfg.audio.crop, cfg.audio.segments)?,
                    visual: prepare_stream(&v, cfg.visual.crop, cfg.visual.segments)?,
                    label: r.label(),
                })
            })
            .collect()
    };
    let train = build(&split.train, train_raw)?;
    let test = build(&split.test, test_raw)?;
    let audio_dim = train[0].audio.dim();
    let visual_dim = train[0].visual.dim();
    for e in train.iter().chain(&test) {
        if e.audio.dim() != audio_dim || e.visual.dim() != visual_dim {
            return Err(Error::Shape(format!(
                "segment {} has feature dims ({}, {}), expected ({audio_dim}, {visual_dim})",
                e.segment_id,
                e.audio.dim(),
                e.visual.dim()
            )));
        }
    }
    Ok(PreparedData {
        train,
        test,
        pca,
        audio_dim,
        visual_dim,
    })
}
