use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use disclosure_core::baselines::{run_baselines, BaselineReport, SvmParams};
use disclosure_core::corpus::{generate_synthetic_corpus, load_manifest, write_manifest, SegmentRecord, SyntheticSpec, PCA};
use disclosure_core::features::{
    apply_pca, cmvn, compute_mfcc, concat_columns, fit_pca, interpolate_missing, read_wav, savgol_smooth, FeatureMatrix, MfccConfig,
    Modality,
};
use disclosure_core::matrix::Matrix;
use disclosure_core::sdfm;
use disclosure_core::training::{protocol_grid, run_ablation, AblationConfig, AblationReport, GRID_PAPER8};
use rayon::prelude::*;

use crate::config::ConfigFile;
use crate::manifest::{corpus_digests, sha256_file, Clock, InputDigest, RunManifest};
use crate::{AblateArgs, BaselineArgs, ExtractArgs, ReportArgs, SynthArgs, TrainArgs, TrainingFlags};

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn synth(args: &SynthArgs, out: &Path) -> Result<()> {
    let mut clock = Clock::start();
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing synthetic spec {}", p.display()))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(classes) = args.classes {
        let per = args.per_class.unwrap_or_else(|| spec.class_counts.first().copied().unwrap_or(10));
        spec.class_counts = vec![per; classes];
    } else if let Some(per) = args.per_class {
        spec.class_counts = vec![per; spec.class_counts.len()];
    }
    if let Some(p) = args.participants {
        spec.participants = p;
    }
    if let Some(snr) = args.snr {
        spec.snr = snr;
    }
    if let Some(d) = args.au_gaze_dim {
        spec.au_gaze_dim = d;
    }
    if let Some(r) = args.missing_rate {
        spec.missing_rate = r;
    }
    spec.waveforms |= args.waveforms;
    spec.validate()?;
    prepare_out(out)?;
    let corpus = generate_synthetic_corpus(&spec, args.seed, out)?;
    clock.lap("generate");
    std::fs::write(out.join("synthetic_spec.toml"), toml::to_string(&spec)?)?;
    let mut manifest = RunManifest::new("synth");
    manifest.config = Some(toml::to_string(&spec)?);
    manifest.seeds.insert("corpus".into(), args.seed);
    manifest.write(out, clock)?;
    println!(
        "wrote {} segments ({} feature files) to {}",
        corpus.records.len(),
        corpus.files_written.len(),
        corpus.manifest_path.display()
    );
    Ok(())
}

/// Conditioned copy of every family: interpolation, optional smoothing and CMVN, and an
/// optional PCA family fit on all visual frames of the manifest.
pub fn extract(args: &ExtractArgs, out: &Path) -> Result<()> {
    let mut clock = Clock::start();
    let records = load_manifest(&args.manifest)?;
    if records.is_empty() {
        bail!("manifest {} holds no records", args.manifest.display());
    }
    let mut manifest = RunManifest::new("extract");
    manifest.inputs = corpus_digests(&args.manifest, &records)?;
    clock.lap("digest");
    prepare_out(out)?;
    let mfcc = MfccConfig {
        n_mels: args.n_mels,
        n_coeffs: args.n_coeffs,
        ..MfccConfig::default()
    };
    if args.wav_dir.is_some() {
        mfcc.validate()?;
    }

    let families: Vec<String> = records[0].visual_feature_paths.keys().cloned().collect();
    let conditioned: Vec<(FeatureMatrix<f64>, BTreeMap<String, FeatureMatrix<f64>>)> = records
        .par_iter()
        .map(|r| -> Result<_> {
            let audio = match &args.wav_dir {
                Some(dir) => {
                    let (samples, rate) = read_wav(&dir.join(format!("{}.wav", r.segment_id)))?;
                    let wave: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
                    compute_mfcc(&wave, rate, &mfcc)?
                }
                None => interpolate_missing(&sdfm::read_feature_file::<f64>(&r.audio_feature_path)?)?,
            };
            let audio = if args.cmvn { cmvn(&audio)? } else { audio };
            let mut visual = BTreeMap::new();
            for f in &families {
                let m = interpolate_missing(&sdfm::read_feature_file::<f64>(r.visual_path(f)?)?)?;
                let m = if args.smooth {
                    savgol_smooth(&m, args.savgol_window, args.savgol_order)?
                } else {
                    m
                };
                visual.insert(f.clone(), m);
            }
            Ok((audio, visual))
        })
        .collect::<Result<_>>()?;
    clock.lap("condition");

    let pca_input = |visual: &BTreeMap<String, FeatureMatrix<f64>>| -> Result<FeatureMatrix<f64>> {
        let parts: Vec<&FeatureMatrix<f64>> = visual.values().collect();
        Ok(concat_columns(&parts, Modality::VisualPca)?)
    };
    let pca = match args.pca_variance {
        Some(target) => {
            let stacked = conditioned
                .iter()
                .map(|(_, v)| pca_input(v))
                .collect::<Result<Vec<_>>>()?;
            let dim = stacked[0].dim();
            let rows: Vec<f64> = stacked.iter().flat_map(|m| m.data.as_slice().iter().copied()).collect();
            let model = fit_pca(&Matrix::from_vec(rows.len() / dim, dim, rows)?, target)?;
            model.save(&out.join("pca.sdfm"))?;
            Some(model)
        }
        None => None,
    };
    clock.lap("pca");

    let mut written = Vec::with_capacity(records.len());
    for (r, (audio, visual)) in records.iter().zip(&conditioned) {
        let mut rec = r.clone();
        rec.audio_feature_path = out.join("audio").join(format!("{}.sdfm", r.segment_id));
        write_feature(&rec.audio_feature_path, audio)?;
        rec.visual_feature_paths.clear();
        for (f, m) in visual {
            let path = out.join("visual").join(f).join(format!("{}.sdfm", r.segment_id));
            write_feature(&path, m)?;
            rec.visual_feature_paths.insert(f.clone(), path);
        }
        if let Some(model) = &pca {
            let path = out.join("visual").join(PCA).join(format!("{}.sdfm", r.segment_id));
            write_feature(&path, &apply_pca(model, &pca_input(visual)?)?)?;
            rec.visual_feature_paths.insert(PCA.into(), path);
        }
        written.push(rec);
    }
    write_manifest(&out.join("manifest.jsonl"), &written)?;
    clock.lap("write");
    manifest.config = Some(toml::to_string(args)?);
    manifest.write(out, clock)?;
    match &pca {
        Some(m) => println!(
            "extracted {} segments to {} ({} PCA components)",
            written.len(),
            out.display(),
            m.n_components()
        ),
        None => println!("extracted {} segments to {}", written.len(), out.display()),
    }
    Ok(())
}

fn write_feature(path: &Path, m: &FeatureMatrix<f64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(sdfm::write_feature_file(path, m)?)
}

fn training_overrides(flags: &TrainingFlags) -> Vec<(&'static str, toml::Value)> {
    use toml::Value;
    let mut o = Vec::new();
    let mut push = |k: &'static str, v: Option<Value>| {
        if let Some(v) = v {
            o.push((k, v));
        }
    };
    push("data.manifest", flags.manifest.as_ref().map(|p| Value::String(p.to_string_lossy().into_owned())));
    push("data.seed", flags.seed.map(|v| Value::Integer(v as i64)));
    push("data.split_level", flags.split_level.clone().map(Value::String));
    push("features.feature_set", flags.feature_set.clone().map(Value::String));
    push("features.smooth", flags.smooth.then_some(Value::Boolean(true)));
    push("loss.kind", flags.loss.clone().map(Value::String));
    push("train.epochs", flags.epochs.map(|v| Value::Integer(v as i64)));
    push("train.learning_rate", flags.learning_rate.map(Value::Float));
    push("train.batch_size", flags.batch_size.map(|v| Value::Integer(v as i64)));
    push("train.runs", flags.runs.map(|v| Value::Integer(v as i64)));
    o
}

fn load_training(flags: &TrainingFlags) -> Result<(ConfigFile, AblationConfig, PathBuf, Vec<SegmentRecord>)> {
    let file = ConfigFile::load(flags.config.as_deref(), &training_overrides(flags))?;
    let cfg = file.resolve();
    cfg.validate()?;
    let Some(manifest) = file.data.manifest.clone() else {
        bail!("no manifest given: pass --manifest or set data.manifest in the config file");
    };
    let records = load_manifest(&manifest)?;
    Ok((file, cfg, manifest, records))
}

fn print_report(report: &AblationReport) {
    println!("{:<40} {:>8} {:>8} {:>8}", "cell", "mean_f1", "sd_f1", "mae");
    for c in &report.cells {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:<40} {:>8} {:>8} {:>8}", c.cell_id, f(c.mean_f1), f(c.sd_f1), f(c.mean_mae));
        if let Some(e) = &c.error {
            println!("  error: {e}");
        }
    }
}

fn failed_cells(report: &AblationReport) -> Result<()> {
    let failed: Vec<&str> = report.cells.iter().filter(|c| c.error.is_some()).map(|c| c.cell_id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        bail!("cells failed: {}", failed.join(", "))
    }
}

pub fn train(args: &TrainArgs, out: &Path) -> Result<()> {
    let mut clock = Clock::start();
    let (_, cfg, manifest_path, records) = load_training(&args.flags)?;
    let mut manifest = RunManifest::new("train");
    manifest.inputs = corpus_digests(&manifest_path, &records)?;
    clock.lap("digest");
    prepare_out(out)?;
    let snapshot = ConfigFile::snapshot(&cfg, Some(&manifest_path)).to_toml();
    std::fs::write(out.join("config.toml"), &snapshot)?;
    let report = run_ablation("train", &[cfg.clone()], &records, Some(out))?;
    clock.lap("train");
    manifest.config = Some(snapshot);
    manifest.seeds.insert("split".into(), cfg.seed);
    for run in 0..cfg.runs {
        manifest.seeds.insert(format!("run{run}"), cfg.run_seed(run));
    }
    manifest.write(out, clock)?;
    print_report(&report);
    failed_cells(&report)
}

pub fn ablate(args: &AblateArgs, out: &Path) -> Result<()> {
    let mut clock = Clock::start();
    if args.grid != GRID_PAPER8 {
        bail!("unknown grid {:?}; available: {GRID_PAPER8}", args.grid);
    }
    let (_, base, manifest_path, records) = load_training(&args.flags)?;
    let grid = protocol_grid(&base);
    for c in &grid {
        c.validate()?;
        c.check_protocol_epochs()?;
    }
    let mut manifest = RunManifest::new("ablate");
    manifest.inputs = corpus_digests(&manifest_path, &records)?;
    clock.lap("digest");
    prepare_out(out)?;
    let snapshot = ConfigFile::snapshot(&base, Some(&manifest_path)).to_toml();
    std::fs::write(out.join("config.toml"), &snapshot)?;
    let report = run_ablation(&args.grid, &grid, &records, Some(out))?;
    clock.lap("ablation");
    manifest.config = Some(snapshot);
    manifest.seeds.insert("split".into(), base.seed);
    for run in 0..base.runs {
        manifest.seeds.insert(format!("run{run}"), base.run_seed(run));
    }
    manifest.write(out, clock)?;
    print_report(&report);
    failed_cells(&report)
}

pub fn baseline(args: &BaselineArgs, out: &Path) -> Result<()> {
    let mut clock = Clock::start();
    let records = load_manifest(&args.manifest)?;
    if records.is_empty() {
        bail!("manifest {} holds no records", args.manifest.display());
    }
    let families = if args.families.is_empty() {
        std::iter::once("audio".to_string())
            .chain(records[0].visual_feature_paths.keys().cloned())
            .collect()
    } else {
        args.families.clone()
    };
    let params = SvmParams {
        c: args.c,
        gamma: args.gamma,
        savgol_window: args.savgol_window,
        savgol_order: args.savgol_order,
    };
    let mut manifest = RunManifest::new("baseline");
    manifest.inputs = corpus_digests(&args.manifest, &records)?;
    clock.lap("digest");
    prepare_out(out)?;
    let report = run_baselines(&records, &families, args.seed, &params)?;
    report.write(out)?;
    clock.lap("baseline");
    manifest.config = Some(toml::to_string(&params)?);
    manifest.seeds.insert("folds".into(), args.seed);
    manifest.write(out, clock)?;
    for r in &report.results {
        println!(
            "{:<12} smoothed={:<5} mean_f1={:.4} sd={:.4}",
            r.feature_family, r.smoothed, r.mean, r.sd
        );
    }
    Ok(())
}

/// Re-renders tables and charts from a stored `summary.json` or `baseline_summary.json`.
pub fn report(args: &ReportArgs, out: &Path) -> Result<()> {
    let clock = Clock::start();
    let ablation = args.input.join("summary.json");
    let baseline = args.input.join("baseline_summary.json");
    let mut manifest = RunManifest::new("report");
    prepare_out(out)?;
    let mut rendered = false;
    if ablation.is_file() {
        AblationReport::read_summary(&ablation)?.write(out)?;
        manifest.inputs.push(InputDigest { sha256: sha256_file(&ablation)?, path: ablation });
        rendered = true;
    }
    if baseline.is_file() {
        let bytes = std::fs::read(&baseline)?;
        let report: BaselineReport =
            serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", baseline.display()))?;
        report.write(out)?;
        manifest.inputs.push(InputDigest { sha256: sha256_file(&baseline)?, path: baseline });
        rendered = true;
    }
    if !rendered {
        bail!("{} holds neither summary.json nor baseline_summary.json", args.input.display());
    }
    manifest.write(out, clock)?;
    println!("rendered report into {}", out.display());
    Ok(())
}
