//! Sectioned TOML experiment configuration (`[data]`, `[features]`, `[model]`, `[loss]`,
//! `[train]`) resolved into an [`AblationConfig`]. Command-line flags are applied on top of
//! the file as dotted-key overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use disclosure_core::corpus::SplitLevel;
use disclosure_core::losses::LossKind;
use disclosure_core::model::Framing;
use disclosure_core::training::{AblationConfig, FeatureSet, StreamShape};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: Option<PathBuf>,
    pub split_ratio: Option<f64>,
    pub split_level: Option<SplitLevel>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub feature_set: Option<FeatureSet>,
    pub smooth: Option<bool>,
    pub savgol_window: Option<usize>,
    pub savgol_order: Option<usize>,
    pub audio_cmvn: Option<bool>,
    pub pca_families: Option<Vec<String>>,
    pub pca_variance: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub framing: Option<Framing>,
    pub channels: Option<usize>,
    pub audio_kernel: Option<usize>,
    pub visual_kernel: Option<usize>,
    pub audio: Option<StreamShape>,
    pub visual: Option<StreamShape>,
    pub freeze_backbone: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kind: Option<LossKind>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub runs: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigFile {
    /// Reads `path` (if any) and applies `overrides` (`("train.epochs", value)` pairs).
    /// A relative `data.manifest` in the file is resolved against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[(&str, toml::Value)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut t: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new(""));
                if let Some(m) = t.get_mut("data").and_then(|d| d.get_mut("manifest")) {
                    if let Some(s) = m.as_str() {
                        *m = toml::Value::String(base.join(s).to_string_lossy().into_owned());
                    }
                }
                t
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            let (section, field) = key.split_once('.').expect("override keys are section.field");
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(field.to_string(), value.clone());
                }
                _ => bail!("config key {section:?} must be a table"),
            }
        }
        toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")
    }

    /// Protocol defaults of the chosen feature set and loss, then every value present here.
    pub fn resolve(&self) -> AblationConfig {
        let fs = self.features.feature_set.unwrap_or(FeatureSet::FaceOnly);
        let kind = self.loss.kind.unwrap_or(LossKind::Ce);
        let mut c = AblationConfig::protocol(fs, kind);
        set(&mut c.split_ratio, self.data.split_ratio);
        set(&mut c.split_level, self.data.split_level);
        set(&mut c.seed, self.data.seed);
        set(&mut c.smooth, self.features.smooth);
        set(&mut c.savgol_window, self.features.savgol_window);
        set(&mut c.savgol_order, self.features.savgol_order);
        set(&mut c.audio_cmvn, self.features.audio_cmvn);
        set(&mut c.pca_families, self.features.pca_families.clone());
        set(&mut c.pca_variance, self.features.pca_variance);
        set(&mut c.framing, self.model.framing);
        set(&mut c.channels, self.model.channels);
        set(&mut c.audio_kernel, self.model.audio_kernel);
        set(&mut c.visual_kernel, self.model.visual_kernel);
        set(&mut c.audio, self.model.audio);
        set(&mut c.visual, self.model.visual);
        set(&mut c.freeze_backbone, self.model.freeze_backbone);
        set(&mut c.loss.alpha, self.loss.alpha);
        set(&mut c.loss.lambda, self.loss.lambda);
        set(&mut c.loss.mu, self.loss.mu);
        set(&mut c.epochs, self.train.epochs);
        set(&mut c.learning_rate, self.train.learning_rate);
        set(&mut c.batch_size, self.train.batch_size);
        set(&mut c.runs, self.train.runs);
        c
    }

    /// Fully populated file that resolves back to `c`.
    pub fn snapshot(c: &AblationConfig, manifest: Option<&Path>) -> Self {
        Self {
            data: DataSection {
                manifest: manifest.map(Path::to_path_buf),
                split_ratio: Some(c.split_ratio),
                split_level: Some(c.split_level),
                seed: Some(c.seed),
            },
            features: FeaturesSection {
                feature_set: Some(c.feature_set),
                smooth: Some(c.smooth),
                savgol_window: Some(c.savgol_window),
                savgol_order: Some(c.savgol_order),
                audio_cmvn: Some(c.audio_cmvn),
                pca_families: Some(c.pca_families.clone()),
                pca_variance: Some(c.pca_variance),
            },
            model: ModelSection {
                framing: Some(c.framing),
                channels: Some(c.channels),
                audio_kernel: Some(c.audio_kernel),
                visual_kernel: Some(c.visual_kernel),
                audio: Some(c.audio),
                visual: Some(c.visual),
                freeze_backbone: Some(c.freeze_backbone),
            },
            loss: LossSection {
                kind: Some(c.loss.kind),
                alpha: Some(c.loss.alpha),
                lambda: Some(c.loss.lambda),
                mu: Some(c.loss.mu),
            },
            train: TrainSection {
                epochs: Some(c.epochs),
                learning_rate: Some(c.learning_rate),
                batch_size: Some(c.batch_size),
                runs: Some(c.runs),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut c = AblationConfig::protocol(FeatureSet::PcaFused, LossKind::Spce);
        c.epochs = 7;
        c.loss.lambda = 2.5;
        c.pca_families = vec!["face".into()];
        let text = ConfigFile::snapshot(&c, None).to_toml();
        let back: ConfigFile = toml::from_str(&text).unwrap();
        assert_eq!(back.resolve(), c);
    }

    #[test]
    fn loss_selects_protocol_defaults() {
        let file: ConfigFile = toml::from_str("[loss]\nkind = \"mse\"\n").unwrap();
        let c = file.resolve();
        assert_eq!(c.framing, Framing::Regression);
        assert_eq!(c.epochs, 100);
        let file: ConfigFile = toml::from_str("[loss]\nkind = \"spce\"\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(file.resolve().epochs, 3);
    }

    #[test]
    fn overrides_beat_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[data]\nmanifest = \"m.jsonl\"\n[train]\nepochs = 9\nruns = 2\n").unwrap();
        let file = ConfigFile::load(Some(&path), &[("train.epochs", toml::Value::Integer(4))]).unwrap();
        let c = file.resolve();
        assert_eq!((c.epochs, c.runs), (4, 2));
        assert_eq!(file.data.manifest.unwrap(), dir.path().join("m.jsonl"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[train]\nepoch = 3\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[optimizer]\n").is_err());
    }
}
