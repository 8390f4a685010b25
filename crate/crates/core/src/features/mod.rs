//! Feature families and their conditioning: MFCC + CMVN for audio, gap filling,
//! Savitzky-Golay smoothing and PCA fusion for per-frame visual vectors.

mod interpolate;
mod mfcc;
mod pca;
mod savgol;

pub use interpolate::interpolate_missing;
pub use mfcc::{compute_mfcc, mel_filterbank, read_wav, write_wav, MfccConfig};
pub use pca::{apply_pca, fit_pca, orthonormality_error, PcaModel};
pub use savgol::{savgol_coefficients, savgol_smooth};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    AudioMfcc,
    VisualFace,
    VisualAuGaze,
    VisualPca,
    AudioPretrained,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::AudioMfcc,
        Modality::VisualFace,
        Modality::VisualAuGaze,
        Modality::VisualPca,
        Modality::AudioPretrained,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Modality::AudioMfcc => 0,
            Modality::VisualFace => 1,
            Modality::VisualAuGaze => 2,
            Modality::VisualPca => 3,
            Modality::AudioPretrained => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::AudioMfcc => "audio_mfcc",
            Modality::VisualFace => "visual_face",
            Modality::VisualAuGaze => "visual_au_gaze",
            Modality::VisualPca => "visual_pca",
            Modality::AudioPretrained => "audio_pretrained",
        }
    }

    pub fn is_visual(self) -> bool {
        matches!(
            self,
            Modality::VisualFace | Modality::VisualAuGaze | Modality::VisualPca
        )
    }
}

/// Time-major feature matrix (`t` frames by `n` features) with an optional
/// per-frame validity mask (`true` = frame observed).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    pub data: Matrix<T>,
    pub modality: Modality,
    pub frame_rate: f64,
    pub mask: Option<Vec<bool>>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(data: Matrix<T>, modality: Modality, frame_rate: f64, mask: Option<Vec<bool>>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if let Some(mask) = &mask {
            if mask.len() != data.rows() {
                return Err(Error::Shape(format!(
                    "mask has {} entries for {} frames",
                    mask.len(),
                    data.rows()
                )));
            }
        }
        Ok(Self {
            data,
            modality,
            frame_rate,
            mask,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn observed_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.frames(), |m| m.iter().filter(|&&b| b).count())
    }

    pub fn fully_observed(&self) -> bool {
        self.mask.as_ref().is_none_or(|m| m.iter().all(|&b| b))
    }

    pub fn with_data(&self, data: Matrix<T>) -> Self {
        Self {
            data,
            modality: self.modality,
            frame_rate: self.frame_rate,
            mask: self.mask.clone(),
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.data.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{} features", self.modality.name())))
        }
    }

    pub fn cast<U: Real>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            data: self.data.cast(),
            modality: self.modality,
            frame_rate: self.frame_rate,
            mask: self.mask.clone(),
        }
    }
}

/// Column means over all frames.
pub fn mean_pool<T: Real>(m: &FeatureMatrix<T>) -> Vec<T> {
    let t = T::from_usize_lossy(m.frames());
    let mut out = vec![T::zero(); m.dim()];
    for row in m.data.row_iter() {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= t);
    out
}

/// Per-column standardization with population statistics over the matrix's own frames.
/// Zero-variance columns map to zeros.
pub fn cmvn<T: Real>(m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let t = m.frames();
    if t < 2 {
        return Err(Error::InvalidArgument(format!("cmvn needs at least 2 frames, got {t}")));
    }
    let tf = T::from_usize_lossy(t);
    let mut out = m.data.clone();
    for j in 0..m.dim() {
        let col = m.data.column(j);
        let mean = col.iter().copied().sum::<T>() / tf;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / tf;
        let std = var.sqrt();
        // relative threshold keeps float round-off in constant columns from being amplified
        let scale = col.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let degenerate = std <= scale * T::epsilon() * T::lit(16.0) || std == T::zero();
        let normalized: Vec<T> = if degenerate {
            vec![T::zero(); t]
        } else {
            col.iter().map(|&x| (x - mean) / std).collect()
        };
        out.set_column(j, &normalized);
    }
    Ok(m.with_data(out))
}

/// Concatenates feature matrices column-wise. All inputs must share the frame count; the
/// output mask is the conjunction of the input masks.
pub fn concat_columns<T: Real>(parts: &[&FeatureMatrix<T>], modality: Modality) -> Result<FeatureMatrix<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    let t = first.frames();
    if let Some(bad) = parts.iter().find(|p| p.frames() != t) {
        return Err(Error::Shape(format!(
            "cannot concatenate {} frames with {t} frames",
            bad.frames()
        )));
    }
    let n: usize = parts.iter().map(|p| p.dim()).sum();
    let mut data = Vec::with_capacity(t * n);
    for i in 0..t {
        for p in parts {
            data.extend_from_slice(p.data.row(i));
        }
    }
    let mask = if parts.iter().any(|p| p.mask.is_some()) {
        Some(
            (0..t)
                .map(|i| parts.iter().all(|p| p.mask.as_ref().is_none_or(|m| m[i])))
                .collect(),
        )
    } else {
        None
    };
    FeatureMatrix::new(Matrix::from_vec(t, n, data)?, modality, first.frame_rate, mask)
}
