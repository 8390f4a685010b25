//! Training protocol: Adam over weighted-with-replacement mini-batches, F1 evaluation,
//! repeated runs and the 8-cell ablation grid.

mod ablation;
mod adam;
mod data;
mod metrics;
mod trainer;

pub use ablation::{cell_id, protocol_grid, run_ablation, AblationReport, CellReport, GRID_PAPER8};
pub use adam::Adam;
pub use data::{condition_visual, load_audio, prepare_data, Example, PreparedData};
pub use metrics::{confusion_matrix, evaluate_predictions, macro_f1, mean_sd, Evaluation};
pub use trainer::{evaluate_f1, predict_all, train_one, RunOutcome, TrainedRun};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitLevel;
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossKind};
use crate::model::{Framing, NetworkSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Face embeddings only, through the visual conv encoder.
    FaceOnly,
    /// All visual families concatenated and PCA-reduced, through the bypass encoder.
    PcaFused,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::FaceOnly => "face_only",
            FeatureSet::PcaFused => "pca_fused",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face_only" => Ok(FeatureSet::FaceOnly),
            "pca_fused" => Ok(FeatureSet::PcaFused),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

/// Crop length `l` and segment count `s` of one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamShape {
    pub crop: usize,
    pub segments: usize,
}

impl StreamShape {
    pub const AUDIO: Self = Self { crop: 128, segments: 4 };
    pub const VISUAL: Self = Self { crop: 210, segments: 7 };

    fn validate(&self, name: &str) -> Result<()> {
        if self.crop == 0 || self.segments == 0 || self.crop % self.segments != 0 {
            return Err(Error::Config(format!(
                "{name}: crop {} must be a positive multiple of segments {}",
                self.crop, self.segments
            )));
        }
        Ok(())
    }
}

/// One cell of the ablation grid plus every hyperparameter of its training runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub feature_set: FeatureSet,
    pub framing: Framing,
    pub loss: LossConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub audio: StreamShape,
    pub visual: StreamShape,
    pub runs: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub split_level: SplitLevel,
    /// Savitzky-Golay smoothing of visual features.
    pub smooth: bool,
    pub savgol_window: usize,
    pub savgol_order: usize,
    /// Per-file CMVN on the audio features.
    pub audio_cmvn: bool,
    /// Visual families fused by `pca_fused`; empty means every family of the record.
    pub pca_families: Vec<String>,
    pub pca_variance: f64,
    pub channels: usize,
    pub audio_kernel: usize,
    pub visual_kernel: usize,
    /// Keep backbone encoder parameters at their initial values.
    pub freeze_backbone: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::protocol(FeatureSet::FaceOnly, LossKind::Ce)
    }
}

impl AblationConfig {
    /// Protocol defaults for one grid cell: regression framing for `mse`, 150 epochs for
    /// `spce` and 100 otherwise.
    pub fn protocol(feature_set: FeatureSet, loss: LossKind) -> Self {
        Self {
            feature_set,
            framing: if loss.is_regression() {
                Framing::Regression
            } else {
                Framing::Classification
            },
            loss: LossConfig::new(loss),
            epochs: protocol_epochs(loss),
            learning_rate: 0.01,
            batch_size: 35,
            audio: StreamShape::AUDIO,
            visual: StreamShape::VISUAL,
            runs: 5,
            seed: 0,
            split_ratio: 0.8,
            split_level: SplitLevel::Segment,
            smooth: false,
            savgol_window: 11,
            savgol_order: 3,
            audio_cmvn: false,
            pca_families: Vec::new(),
            pca_variance: 0.99,
            channels: 32,
            audio_kernel: 3,
            visual_kernel: 3,
            freeze_backbone: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if (self.framing == Framing::Regression) != self.loss.kind.is_regression() {
            return Err(Error::Config(format!(
                "framing {} is incompatible with loss {}: regression goes with mse only",
                self.framing.name(),
                self.loss.kind.name()
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.runs == 0 {
            return Err(Error::Config("epochs, batch_size and runs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        self.audio.validate("audio")?;
        self.visual.validate("visual")?;
        if self.smooth && (self.savgol_window % 2 == 0 || self.savgol_order >= self.savgol_window) {
            return Err(Error::Config(format!(
                "savgol window {} must be odd and exceed order {}",
                self.savgol_window, self.savgol_order
            )));
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::Config(format!("pca_variance must lie in (0, 1], got {}", self.pca_variance)));
        }
        if self.channels == 0 || self.audio_kernel == 0 || self.visual_kernel == 0 {
            return Err(Error::Config("channels and kernels must be positive".into()));
        }
        if self.audio_kernel > self.audio.crop / self.audio.segments || self.visual_kernel > self.visual.crop / self.visual.segments {
            return Err(Error::Config("encoder kernel is longer than a segment".into()));
        }
        Ok(())
    }

    /// The epoch rule of the published protocol: 150 for `spce`, 100 otherwise.
    pub fn check_protocol_epochs(&self) -> Result<()> {
        let want = protocol_epochs(self.loss.kind);
        if self.epochs != want {
            return Err(Error::Config(format!(
                "{} cells train {want} epochs under the protocol, config has {}",
                self.loss.kind.name(),
                self.epochs
            )));
        }
        Ok(())
    }

    pub fn network_spec(&self, audio_dim: usize, visual_dim: usize) -> NetworkSpec {
        NetworkSpec {
            audio_dim,
            visual_dim,
            audio_segments: self.audio.segments,
            visual_segments: self.visual.segments,
            channels: self.channels,
            audio_kernel: self.audio_kernel,
            visual_kernel: self.visual_kernel,
            visual_bypass: self.feature_set == FeatureSet::PcaFused,
            framing: self.framing,
        }
    }

    /// Seed of run `run` (0-based).
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn protocol_epochs(loss: LossKind) -> usize {
    if loss == LossKind::Spce {
        150
    } else {
        100
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_defaults() {
        let c = AblationConfig::protocol(FeatureSet::FaceOnly, LossKind::Spce);
        assert_eq!((c.epochs, c.batch_size, c.learning_rate), (150, 35, 0.01));
        assert_eq!((c.audio.crop, c.audio.segments, c.visual.crop, c.visual.segments), (128, 4, 210, 7));
        assert_eq!(AblationConfig::protocol(FeatureSet::PcaFused, LossKind::Mse).framing, Framing::Regression);
        assert_eq!(AblationConfig::protocol(FeatureSet::PcaFused, LossKind::CeLs).epochs, 100);
        c.validate().unwrap();
        c.check_protocol_epochs().unwrap();
    }

    #[test]
    fn framing_must_match_loss() {
        let mut c = AblationConfig::protocol(FeatureSet::FaceOnly, LossKind::Ce);
        c.framing = Framing::Regression;
        assert!(c.validate().is_err());
        let mut c = AblationConfig::protocol(FeatureSet::FaceOnly, LossKind::Mse);
        c.framing = Framing::Classification;
        assert!(c.validate().is_err());
        let mut c = AblationConfig::protocol(FeatureSet::FaceOnly, LossKind::Ce);
        c.epochs = 150;
        assert!(c.check_protocol_epochs().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = AblationConfig::protocol(FeatureSet::PcaFused, LossKind::Spce);
        let back: AblationConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        let partial: AblationConfig = toml::from_str("epochs = 3\n[loss]\nkind = \"ce_ls\"\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.loss.alpha, 0.1);
    }
}
