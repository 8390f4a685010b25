mod common;

use std::collections::BTreeMap;
use std::path::Path;

use disclosure_core::corpus::*;
use disclosure_core::features::{interpolate_missing, mean_pool, FeatureMatrix, Modality};
use disclosure_core::matrix::Matrix;
use disclosure_core::sdfm::{read_feature_file, write_feature_file};
use disclosure_core::training::macro_f1;
use disclosure_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_matrix(path: &Path) {
    let m = FeatureMatrix::new(Matrix::<f32>::from_fn(4, 2, |i, j| (i + j) as f32), Modality::AudioMfcc, 100.0, None).unwrap();
    write_feature_file(path, &m).unwrap();
}

fn line(id: &str, score: u8) -> String {
    format!(
        r#"{{"segment_id":"{id}","participant_id":"p1","session_index":2,"audio_feature_path":"a.sdfm","visual_feature_paths":{{"face":"f.sdfm"}},"score":{score}}}"#
    )
}

fn manifest(dir: &Path, lines: &[String]) -> std::path::PathBuf {
    write_matrix(&dir.join("a.sdfm"));
    write_matrix(&dir.join("f.sdfm"));
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn three_valid_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = manifest(dir.path(), &[line("a", 1), line("b", 7), line("c", 4)]);
    let recs = load_manifest(&path).unwrap();
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[1].score, 7);
    assert_eq!(recs[0].visual_path("face").unwrap(), dir.path().join("f.sdfm"));
}

#[test]
fn invalid_score_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = manifest(dir.path(), &[line("a", 1), line("b", 8)]);
    match load_manifest(&path) {
        Err(Error::Manifest { line, message, .. }) => {
            assert_eq!(line, 2);
            assert!(message.contains('8'), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dangling_duplicate_and_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let dangling = line("a", 1).replace("f.sdfm", "missing.sdfm");
    let path = manifest(dir.path(), &[dangling]);
    assert!(matches!(load_manifest(&path), Err(Error::Manifest { line: 1, .. })));
    let path = manifest(dir.path(), &[line("a", 1), line("a", 2)]);
    assert!(matches!(load_manifest(&path), Err(Error::Manifest { line: 2, .. })));
    let path = manifest(dir.path(), &[line("a", 1), "{not json".into()]);
    assert!(matches!(load_manifest(&path), Err(Error::Manifest { line: 2, .. })));
    let extra = line("a", 1).replace("\"score\"", "\"extra\":1,\"score\"");
    let path = manifest(dir.path(), &[extra]);
    assert!(load_manifest(&path).is_err());
    assert!(matches!(load_manifest(&dir.path().join("nope.jsonl")), Err(Error::Io { .. })));
}

#[test]
fn full_scale_corpus_loads_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        class_counts: vec![178, 178, 178, 178, 178, 179, 179],
        participants: 39,
        audio_dim: 8,
        audio_frames: (2, 3),
        face_dim: 8,
        visual_frames: (2, 3),
        missing_rate: 0.0,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&spec, 5, dir.path()).unwrap();
    let recs = load_manifest(&c.manifest_path).unwrap();
    assert_eq!(recs.len(), 1248);
    let s = split_corpus(&recs, 0.8, 0).unwrap();
    assert_eq!((s.train.len(), s.test.len()), (998, 250));
    let sessions: std::collections::BTreeSet<u32> = recs.iter().map(|r| r.session_index).collect();
    assert_eq!(sessions.len(), 10);
}

#[test]
fn synthetic_counts_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::default();
    let ca = generate_synthetic_corpus(&spec, 1, a.path()).unwrap();
    let cb = generate_synthetic_corpus(&spec, 1, b.path()).unwrap();
    assert_eq!(ca.records.len(), 70);
    assert_eq!(ca.files_written.len(), 140);
    for (x, y) in ca.files_written.iter().zip(&cb.files_written) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(std::fs::read(&ca.manifest_path).unwrap(), std::fs::read(&cb.manifest_path).unwrap());
}

#[test]
fn zero_noise_means_are_prototypes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        snr: f64::INFINITY,
        au_gaze_dim: 9,
        class_counts: vec![3; 7],
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&spec, 2, dir.path()).unwrap();
    for r in &c.records {
        let k = r.label();
        let check = |path: &Path, dim: usize| {
            let m = read_feature_file::<f64>(path).unwrap();
            let want = prototype(k, dim, spec.ordinal_step, spec.class_offset);
            let mask = m.mask.clone().unwrap_or_else(|| vec![true; m.frames()]);
            let observed: Vec<usize> = (0..m.frames()).filter(|&i| mask[i]).collect();
            for j in 0..dim {
                let mean = observed.iter().map(|&i| m.data.get(i, j)).sum::<f64>() / observed.len() as f64;
                assert_eq!(mean, want[j] as f32 as f64);
            }
        };
        check(&r.audio_feature_path, spec.audio_dim);
        check(r.visual_path(FACE).unwrap(), spec.face_dim);
        check(r.visual_path(AU_GAZE).unwrap(), spec.au_gaze_dim);
    }
}

fn pooled(r: &SegmentRecord, family: &str) -> Vec<f64> {
    let m = read_feature_file::<f64>(r.family_path(family).unwrap()).unwrap();
    let m = if m.fully_observed() { m } else { interpolate_missing(&m).unwrap() };
    mean_pool(&m)
}

#[test]
fn default_snr_is_linearly_separable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        class_counts: vec![30; 7],
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&spec, 4, dir.path()).unwrap();
    let s = split_corpus(&c.records, 0.8, 0).unwrap();
    for family in ["audio", FACE] {
        let xs: Vec<Vec<f64>> = s.train.iter().map(|r| pooled(r, family)).collect();
        let ys: Vec<usize> = s.train.iter().map(SegmentRecord::label).collect();
        let test: Vec<Vec<f64>> = s.test.iter().map(|r| pooled(r, family)).collect();
        let truth: Vec<usize> = s.test.iter().map(SegmentRecord::label).collect();
        let pred = common::linear_probe(&xs, &ys, &test);
        let f1 = macro_f1(&truth, &pred).unwrap();
        assert!(f1 >= 0.9, "{family}: probe F1 {f1}");
    }
}

fn with_scores(scores: &[u8]) -> Vec<SegmentRecord> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &score)| SegmentRecord {
            segment_id: format!("s{i}"),
            participant_id: "p".into(),
            session_index: 1,
            audio_feature_path: "a".into(),
            visual_feature_paths: BTreeMap::new(),
            score,
        })
        .collect()
}

fn sampled_histogram(scores: &[u8], draws: usize, seed: u64) -> [usize; 8] {
    let w = sampler_weights(&with_scores(scores)).unwrap();
    let mut hist = [0usize; 8];
    for i in w.draw(draws, &mut ChaCha8Rng::seed_from_u64(seed)) {
        hist[scores[i] as usize] += 1;
    }
    hist
}

#[test]
fn sampler_balances_imbalanced_classes() {
    let mut scores = Vec::new();
    for (k, n) in [(1u8, 200usize), (2, 50), (3, 7), (4, 90), (5, 13), (6, 400), (7, 1)] {
        scores.extend(std::iter::repeat_n(k, n));
    }
    let draws = 70_000.0f64;
    let p = 1.0 / 7.0;
    let sigma = (draws * p * (1.0 - p)).sqrt();
    for seed in 0..5 {
        let hist = sampled_histogram(&scores, 70_000, seed);
        for k in 1..=7 {
            let share = hist[k] as f64 / draws;
            assert!((share - p).abs() <= 0.02, "class {k}: share {share}");
            assert!((hist[k] as f64 - draws * p).abs() <= 5.0 * sigma, "class {k}: {} draws", hist[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampler_uniform_over_present_classes(counts in prop::collection::vec(0usize..40, 7), seed in any::<u64>()) {
        prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= 2);
        let scores: Vec<u8> = counts.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k as u8 + 1, n)).collect();
        let present = counts.iter().filter(|&&c| c > 0).count();
        let draws = 10_000 * present;
        let hist = sampled_histogram(&scores, draws, seed);
        for k in 1..=7 {
            if counts[k - 1] == 0 {
                prop_assert_eq!(hist[k], 0);
            } else {
                let p = 1.0 / present as f64;
                let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
                prop_assert!((hist[k] as f64 - draws as f64 * p).abs() <= 5.0 * sigma, "class {} got {}", k, hist[k]);
            }
        }
    }

    #[test]
    fn split_is_deterministic_disjoint_and_sized(n in 2usize..300, seed in any::<u64>(), ratio in 0.05f64..0.95) {
        let recs = with_scores(&vec![1; n]);
        let a = split_corpus(&recs, ratio, seed).unwrap();
        prop_assert_eq!(&a, &split_corpus(&recs, ratio, seed).unwrap());
        prop_assert_eq!(a.train.len() + a.test.len(), n);
        let expected = ((n as f64) * ratio + 1e-9).floor().clamp(1.0, (n - 1) as f64) as usize;
        prop_assert_eq!(a.train.len(), expected);
        let ids: std::collections::BTreeSet<_> = a.train.iter().map(|r| &r.segment_id).collect();
        prop_assert!(a.test.iter().all(|r| !ids.contains(&r.segment_id)));
    }
}
