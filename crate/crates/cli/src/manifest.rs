//! Provenance record written into every output directory as `run_manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use disclosure_core::corpus::SegmentRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub version: String,
    /// Resolved configuration as TOML; feeding it back through `--config` re-runs the command.
    pub config: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Digests of a manifest and every feature file it references, in record order.
pub fn corpus_digests(manifest: &Path, records: &[SegmentRecord]) -> Result<Vec<InputDigest>> {
    let mut paths = vec![manifest.to_path_buf()];
    for r in records {
        paths.push(r.audio_feature_path.clone());
        paths.extend(r.visual_feature_paths.values().cloned());
    }
    paths
        .into_iter()
        .map(|path| Ok(InputDigest { sha256: sha256_file(&path)?, path }))
        .collect()
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != RUN_MANIFEST) {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// Collects phase timings while a command runs.
pub struct Clock {
    start: Instant,
    phase: Instant,
    pub timings: BTreeMap<String, f64>,
}

impl Clock {
    pub fn start() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            phase: now,
            timings: BTreeMap::new(),
        }
    }

    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.insert(name.into(), (now - self.phase).as_secs_f64());
        self.phase = now;
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.timings.insert("total".into(), self.start.elapsed().as_secs_f64());
        self.timings
    }
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            arguments: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: None,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Lists the output directory and writes the manifest into it.
    pub fn write(mut self, out_dir: &Path, clock: Clock) -> Result<()> {
        let mut outputs = Vec::new();
        list_files(out_dir, out_dir, &mut outputs).with_context(|| format!("listing {}", out_dir.display()))?;
        outputs.sort();
        self.outputs = outputs;
        self.timings = clock.finish();
        let path = out_dir.join(RUN_MANIFEST);
        std::fs::write(&path, serde_json::to_vec_pretty(&self)?).with_context(|| format!("writing {}", path.display()))
    }
}
