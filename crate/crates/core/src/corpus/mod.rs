//! Labeled segment corpus: manifest I/O, train/test splitting, class-balancing sampler
//! and a synthetic corpus generator.

mod synth;

pub use synth::{generate_synthetic_corpus, prototype, SyntheticCorpus, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdfm;
use crate::NUM_CLASSES;

/// Feature family name of the face-embedding stream.
pub const FACE: &str = "face";
/// Feature family name of the action-unit + gaze stream.
pub const AU_GAZE: &str = "au_gaze";
/// Feature family name of PCA-fused visual features.
pub const PCA: &str = "pca";

/// One labeled conversational segment. Feature paths are resolved against the manifest's
/// directory when loaded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub participant_id: String,
    pub session_index: u32,
    pub audio_feature_path: PathBuf,
    pub visual_feature_paths: BTreeMap<String, PathBuf>,
    pub score: u8,
}

impl SegmentRecord {
    pub fn visual_path(&self, family: &str) -> Result<&Path> {
        self.visual_feature_paths
            .get(family)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::InvalidArgument(format!("segment {} lacks visual family {family:?}", self.segment_id)))
    }

    /// Path of a named feature family; `"audio"` selects the audio feature file.
    pub fn family_path(&self, family: &str) -> Result<&Path> {
        if family == "audio" {
            Ok(&self.audio_feature_path)
        } else {
            self.visual_path(family)
        }
    }

    pub fn label(&self) -> usize {
        self.score as usize
    }

    fn check_fields(&self) -> std::result::Result<(), String> {
        if !(1..=NUM_CLASSES as u8).contains(&self.score) {
            return Err(format!("score {} outside 1..=7", self.score));
        }
        if !(1..=10).contains(&self.session_index) {
            return Err(format!("session_index {} outside 1..=10", self.session_index));
        }
        if self.segment_id.is_empty() {
            return Err("empty segment_id".into());
        }
        Ok(())
    }
}

/// Reads a line-delimited JSON manifest, resolving relative feature paths against the
/// manifest's directory. Each referenced file must exist and decode as a feature matrix.
pub fn load_manifest(path: &Path) -> Result<Vec<SegmentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let fail = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: SegmentRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        rec.check_fields().map_err(&fail)?;
        if !seen.insert(rec.segment_id.clone()) {
            return Err(fail(format!("duplicate segment_id {:?}", rec.segment_id)));
        }
        rec.audio_feature_path = base.join(&rec.audio_feature_path);
        for p in rec.visual_feature_paths.values_mut() {
            *p = base.join(&*p);
        }
        let files = std::iter::once(&rec.audio_feature_path).chain(rec.visual_feature_paths.values());
        for f in files {
            if !f.is_file() {
                return Err(fail(format!("feature file {} does not exist", f.display())));
            }
            sdfm::read_feature_file::<f32>(f).map_err(|e| fail(e.to_string()))?;
        }
        records.push(rec);
    }
    Ok(records)
}

/// Writes records one JSON object per line, storing feature paths relative to the
/// manifest's directory where possible.
pub fn write_manifest(path: &Path, records: &[SegmentRecord]) -> Result<()> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if !base.as_os_str().is_empty() {
        std::fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    }
    let rel = |p: &Path| p.strip_prefix(&base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let mut out = Vec::new();
    for r in records {
        let mut r = r.clone();
        r.audio_feature_path = rel(&r.audio_feature_path);
        for p in r.visual_feature_paths.values_mut() {
            *p = rel(p);
        }
        serde_json::to_writer(&mut out, &r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<SegmentRecord>,
    pub test: Vec<SegmentRecord>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLevel {
    #[default]
    Segment,
    Participant,
}

fn check_split_args(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 records to split, got {n}")));
    }
    // guard against 0.8 * 10 landing just below 8
    let train = ((n as f64) * ratio + 1e-9).floor() as usize;
    Ok(train.clamp(1, n - 1))
}

/// Shuffles with `seed` and keeps the first `floor(n * ratio)` records for training.
pub fn split_corpus(records: &[SegmentRecord], ratio: f64, seed: u64) -> Result<CorpusSplit> {
    let n_train = check_split_args(records.len(), ratio)?;
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train);
    Ok(CorpusSplit {
        train: shuffled,
        test,
        seed,
    })
}

/// Participant-disjoint split: whole participants (in shuffled order) go to the training
/// side until it holds at least `floor(n * ratio)` records.
pub fn split_by_participant(records: &[SegmentRecord], ratio: f64, seed: u64) -> Result<CorpusSplit> {
    let n_train = check_split_args(records.len(), ratio)?;
    let mut groups: BTreeMap<&str, Vec<&SegmentRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.participant_id).or_default().push(r);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("participant split needs at least 2 participants".into()));
    }
    let mut ids: Vec<&str> = groups.keys().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, id) in ids.iter().enumerate() {
        let last = i + 1 == ids.len();
        let dst = if train.len() < n_train && !(last && test.is_empty()) {
            &mut train
        } else {
            &mut test
        };
        dst.extend(groups[id].iter().map(|&r| r.clone()));
    }
    Ok(CorpusSplit { train, test, seed })
}

pub fn split(records: &[SegmentRecord], ratio: f64, seed: u64, level: SplitLevel) -> Result<CorpusSplit> {
    match level {
        SplitLevel::Segment => split_corpus(records, ratio, seed),
        SplitLevel::Participant => split_by_participant(records, ratio, seed),
    }
}

/// Inverse class-frequency sampling weights: `N / (7 · count(score))` per record.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerWeights {
    pub weights: Vec<f64>,
}

pub fn sampler_weights(train: &[SegmentRecord]) -> Result<SamplerWeights> {
    sampler_weights_for_labels(&train.iter().map(SegmentRecord::label).collect::<Vec<_>>())
}

pub fn sampler_weights_for_labels(labels: &[usize]) -> Result<SamplerWeights> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot weight an empty training set".into()));
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let weights = labels
        .iter()
        .map(|l| n / (NUM_CLASSES as f64 * counts[l] as f64))
        .collect();
    Ok(SamplerWeights { weights })
}

impl SamplerWeights {
    /// Draws `count` indices with replacement, proportionally to the weights.
    pub fn draw<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.weights).expect("weights are positive");
        (0..count).map(|_| dist.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, score: u8) -> SegmentRecord {
        SegmentRecord {
            segment_id: format!("s{i}"),
            participant_id: format!("p{}", i % 4),
            session_index: 1,
            audio_feature_path: PathBuf::from("a"),
            visual_feature_paths: BTreeMap::new(),
            score,
        }
    }

    fn recs(n: usize) -> Vec<SegmentRecord> {
        (0..n).map(|i| rec(i, (i % 7 + 1) as u8)).collect()
    }

    #[test]
    fn split_sizes() {
        let s = split_corpus(&recs(10), 0.8, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let s = split_corpus(&recs(1248), 0.8, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (998, 250));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let r = recs(50);
        let a = split_corpus(&r, 0.8, 42).unwrap();
        assert_eq!(a, split_corpus(&r, 0.8, 42).unwrap());
        assert_ne!(a.train, split_corpus(&r, 0.8, 43).unwrap().train);
        let train: BTreeSet<_> = a.train.iter().map(|r| &r.segment_id).collect();
        assert!(a.test.iter().all(|r| !train.contains(&r.segment_id)));
    }

    #[test]
    fn split_errors() {
        assert!(split_corpus(&recs(1), 0.8, 0).is_err());
        assert!(split_corpus(&recs(10), 1.0, 0).is_err());
        assert!(split_corpus(&recs(10), 0.0, 0).is_err());
    }

    #[test]
    fn participant_split_keeps_people_apart() {
        let s = split_by_participant(&recs(40), 0.8, 1).unwrap();
        let train: BTreeSet<_> = s.train.iter().map(|r| &r.participant_id).collect();
        assert!(s.test.iter().all(|r| !train.contains(&r.participant_id)));
        assert!(!s.test.is_empty());
        assert_eq!(s.train.len() + s.test.len(), 40);
    }

    #[test]
    fn balanced_classes_get_equal_weights() {
        let w = sampler_weights(&recs(70)).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rare_class_upweighted() {
        let mut r: Vec<_> = (0..90).map(|i| rec(i, 1)).collect();
        r.extend((90..100).map(|i| rec(i, 7)));
        let w = sampler_weights(&r).unwrap();
        assert!((w.weights[95] / w.weights[0] - 9.0).abs() < 1e-12);
        assert!(sampler_weights(&[]).is_err());
    }
}
