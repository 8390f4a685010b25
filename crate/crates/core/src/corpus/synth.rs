use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_manifest, SegmentRecord, AU_GAZE, FACE};
use crate::error::{Error, Result};
use crate::features::{write_wav, FeatureMatrix, Modality};
use crate::matrix::Matrix;
use crate::sdfm;
use crate::NUM_CLASSES;

/// Parameters of the synthetic corpus.
///
/// Every class `k` has a prototype vector per feature family; frames are the prototype plus
/// Gaussian noise with standard deviation `class_offset / snr`. Prototypes combine a
/// class-specific one-hot offset with a ramp along a shared direction, so prototype
/// distance grows with ordinal score distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Segments per class, scores `1..=class_counts.len()`.
    pub class_counts: Vec<usize>,
    pub participants: usize,
    pub audio_dim: usize,
    /// Inclusive range of audio frames per segment.
    pub audio_frames: (usize, usize),
    pub audio_frame_rate: f64,
    pub face_dim: usize,
    /// Adds an action-unit + gaze family when non-zero.
    pub au_gaze_dim: usize,
    pub visual_frames: (usize, usize),
    pub visual_frame_rate: f64,
    /// Signal-to-noise ratio; `inf` gives noise-free frames.
    pub snr: f64,
    pub ordinal_step: f64,
    pub class_offset: f64,
    /// Probability that a visual frame is reported missing.
    pub missing_rate: f64,
    /// Also writes a 16 kHz waveform per segment for the MFCC extraction path.
    pub waveforms: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_counts: vec![10; NUM_CLASSES],
            participants: 7,
            audio_dim: 16,
            audio_frames: (96, 160),
            audio_frame_rate: 100.0,
            face_dim: 12,
            au_gaze_dim: 0,
            visual_frames: (150, 240),
            visual_frame_rate: 30.0,
            snr: 2.0,
            ordinal_step: 0.5,
            class_offset: 1.0,
            missing_rate: 0.05,
            waveforms: false,
        }
    }
}

/// Minimum feature dimension of any family: one one-hot axis per class plus a ramp axis.
const MIN_DIM: usize = NUM_CLASSES + 1;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.class_counts.is_empty() || self.class_counts.len() > NUM_CLASSES {
            return bad(format!("class_counts must list 1..=7 classes, got {}", self.class_counts.len()));
        }
        if self.class_counts.iter().sum::<usize>() == 0 {
            return bad("class_counts are all zero".into());
        }
        if self.participants == 0 {
            return bad("participants must be positive".into());
        }
        for (name, d) in [("audio_dim", self.audio_dim), ("face_dim", self.face_dim)] {
            if d < MIN_DIM {
                return bad(format!("{name} must be at least {MIN_DIM}, got {d}"));
            }
        }
        if self.au_gaze_dim != 0 && self.au_gaze_dim < MIN_DIM {
            return bad(format!("au_gaze_dim must be 0 or at least {MIN_DIM}, got {}", self.au_gaze_dim));
        }
        for (name, (lo, hi)) in [("audio_frames", self.audio_frames), ("visual_frames", self.visual_frames)] {
            if lo < 2 || lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) must satisfy 2 <= min <= max"));
            }
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        if !(self.audio_frame_rate > 0.0 && self.visual_frame_rate > 0.0) {
            return bad("frame rates must be positive".into());
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 0.5), got {}", self.missing_rate));
        }
        if !(self.ordinal_step > 0.0 && self.class_offset > 0.0) {
            return bad("ordinal_step and class_offset must be positive".into());
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        if self.snr.is_infinite() {
            0.0
        } else {
            self.class_offset / self.snr
        }
    }

    pub fn total(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn visual_families(&self) -> Vec<(&'static str, usize, Modality)> {
        let mut out = vec![(FACE, self.face_dim, Modality::VisualFace)];
        if self.au_gaze_dim > 0 {
            out.push((AU_GAZE, self.au_gaze_dim, Modality::VisualAuGaze));
        }
        out
    }
}

/// Class prototype for score `k` in a `dim`-dimensional family.
pub fn prototype(k: usize, dim: usize, ordinal_step: f64, class_offset: f64) -> Vec<f64> {
    let ramp = ordinal_step * (k as f64 - 1.0) / ((dim - NUM_CLASSES) as f64).sqrt();
    (0..dim)
        .map(|j| {
            if j < NUM_CLASSES {
                if j + 1 == k {
                    class_offset
                } else {
                    0.0
                }
            } else {
                ramp
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub manifest_path: PathBuf,
    pub records: Vec<SegmentRecord>,
    pub files_written: Vec<PathBuf>,
}

fn frames(rng: &mut ChaCha8Rng, proto: &[f64], t: usize, noise: f64) -> Matrix<f32> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Matrix::from_fn(t, proto.len(), |_, j| {
        let e = if noise > 0.0 { noise * normal.sample(rng) } else { 0.0 };
        (proto[j] + e) as f32
    })
}

/// A few class-dependent partials plus noise, sampled at 16 kHz.
fn waveform(rng: &mut ChaCha8Rng, k: usize, frames: usize, noise: f64) -> Vec<f32> {
    const SR: f64 = 16_000.0;
    let n = frames * 160;
    let f0 = 110.0 * (1.0 + 0.25 * (k as f64 - 1.0));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / SR;
            let tone: f64 = (1..=3).map(|h| (2.0 * PI * f0 * h as f64 * t + phase).sin() / h as f64).sum();
            (0.3 * tone + 0.05 * noise * normal.sample(rng)) as f32
        })
        .collect()
}

/// Writes a deterministic synthetic corpus (feature files plus `manifest.jsonl`) under
/// `out_dir`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64, out_dir: &Path) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = spec
        .class_counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i + 1, c))
        .collect();
    labels.shuffle(&mut rng);

    let families = spec.visual_families();
    let audio_dir = out_dir.join("audio");
    let mut dirs = vec![audio_dir.clone()];
    dirs.extend(families.iter().map(|(name, _, _)| out_dir.join("visual").join(name)));
    if spec.waveforms {
        dirs.push(out_dir.join("wav"));
    }
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let noise = spec.noise_std();
    let mut records = Vec::with_capacity(labels.len());
    let mut files = Vec::new();
    for (i, &k) in labels.iter().enumerate() {
        let id = format!("seg{i:05}");
        let t_a = rng.random_range(spec.audio_frames.0..=spec.audio_frames.1);
        let t_v = rng.random_range(spec.visual_frames.0..=spec.visual_frames.1);

        let proto = prototype(k, spec.audio_dim, spec.ordinal_step, spec.class_offset);
        let audio = FeatureMatrix::new(frames(&mut rng, &proto, t_a, noise), Modality::AudioMfcc, spec.audio_frame_rate, None)?;
        let audio_path = audio_dir.join(format!("{id}.sdfm"));
        sdfm::write_feature_file(&audio_path, &audio)?;
        files.push(audio_path.clone());

        let mask = if spec.missing_rate > 0.0 {
            let mut m: Vec<bool> = (0..t_v).map(|_| !rng.random_bool(spec.missing_rate)).collect();
            // interpolation needs at least two observed frames
            m[0] = true;
            m[t_v - 1] = true;
            Some(m)
        } else {
            None
        };
        let mut visual_paths = BTreeMap::new();
        for &(name, dim, modality) in &families {
            let proto = prototype(k, dim, spec.ordinal_step, spec.class_offset);
            let mut data = frames(&mut rng, &proto, t_v, noise);
            if let Some(m) = &mask {
                for (row, _) in m.iter().enumerate().filter(|(_, &ok)| !ok) {
                    data.row_mut(row).fill(0.0);
                }
            }
            let fm = FeatureMatrix::new(data, modality, spec.visual_frame_rate, mask.clone())?;
            let path = out_dir.join("visual").join(name).join(format!("{id}.sdfm"));
            sdfm::write_feature_file(&path, &fm)?;
            files.push(path.clone());
            visual_paths.insert(name.to_string(), path);
        }

        if spec.waveforms {
            let path = out_dir.join("wav").join(format!("{id}.wav"));
            write_wav(&path, &waveform(&mut rng, k, t_a, noise), 16_000)?;
            files.push(path);
        }

        records.push(SegmentRecord {
            segment_id: id,
            participant_id: format!("P{:03}", i % spec.participants),
            session_index: ((i / spec.participants) % 10 + 1) as u32,
            audio_feature_path: audio_path,
            visual_feature_paths: visual_paths,
            score: k as u8,
        });
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    Ok(SyntheticCorpus {
        manifest_path,
        records,
        files_written: files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    #[test]
    fn prototype_distance_grows_with_score_gap() {
        for dim in [8, 12, 40] {
            let p: Vec<_> = (1..=7).map(|k| prototype(k, dim, 0.5, 1.0)).collect();
            let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            for k in 0..7 {
                let mut prev = 0.0;
                for m in k + 1..7 {
                    let d = d2(&p[k], &p[m]);
                    assert!(d > prev);
                    prev = d;
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::default().validate().is_ok());
        let bad = [
            SyntheticSpec { audio_dim: 4, ..Default::default() },
            SyntheticSpec { class_counts: vec![], ..Default::default() },
            SyntheticSpec { snr: 0.0, ..Default::default() },
            SyntheticSpec { visual_frames: (5, 3), ..Default::default() },
            SyntheticSpec { au_gaze_dim: 3, ..Default::default() },
        ];
        for s in bad {
            assert!(s.validate().is_err(), "{s:?}");
        }
    }

    #[test]
    fn generates_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            class_counts: vec![2; 7],
            audio_frames: (10, 12),
            visual_frames: (8, 9),
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&spec, 9, dir.path()).unwrap();
        assert_eq!(c.records.len(), 14);
        assert_eq!(c.files_written.len(), 28);
        let loaded = load_manifest(&c.manifest_path).unwrap();
        assert_eq!(loaded, c.records);
    }
}
