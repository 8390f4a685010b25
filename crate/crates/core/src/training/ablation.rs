use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split, SegmentRecord};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::plot::{grouped_bar_chart, BarSeries};
use crate::sdfm::{self, Section};

use super::{mean_sd, prepare_data, protocol_epochs, train_one, AblationConfig, FeatureSet, RunOutcome};

pub const GRID_PAPER8: &str = "paper8";

/// `{face_only, pca_fused} x {ce, ce_ls, spce, mse}` derived from `base`, with the framing
/// and epoch count each loss implies.
pub fn protocol_grid(base: &AblationConfig) -> Vec<AblationConfig> {
    let mut grid = Vec::with_capacity(8);
    for fs in [FeatureSet::FaceOnly, FeatureSet::PcaFused] {
        for kind in [LossKind::Ce, LossKind::CeLs, LossKind::Spce, LossKind::Mse] {
            let mut c = base.clone();
            let defaults = AblationConfig::protocol(fs, kind);
            c.feature_set = fs;
            c.framing = defaults.framing;
            c.loss.kind = kind;
            c.epochs = protocol_epochs(kind);
            grid.push(c);
        }
    }
    grid
}

pub fn cell_id(cfg: &AblationConfig) -> String {
    format!("{}-{}-{}", cfg.feature_set.name(), cfg.framing.name(), cfg.loss.kind.name())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell_id: String,
    pub feature_set: String,
    pub framing: String,
    pub loss: String,
    pub epochs: usize,
    pub config: AblationConfig,
    pub runs: Vec<RunOutcome>,
    pub test_f1: Vec<f64>,
    pub mean_f1: Option<f64>,
    pub sd_f1: Option<f64>,
    pub mean_weighted_f1: Option<f64>,
    pub sd_weighted_f1: Option<f64>,
    pub mean_mae: Option<f64>,
    /// Number of PCA components retained (`pca_fused` only).
    pub pca_components: Option<usize>,
    pub error: Option<String>,
}

/// Mean absolute score error of the `spce` and `ce` cells of one feature set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdinalComparison {
    pub feature_set: String,
    pub ce_mae: f64,
    pub spce_mae: f64,
    pub spce_not_worse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub grid: String,
    pub records: usize,
    pub cells: Vec<CellReport>,
    pub ordinal_comparison: Vec<OrdinalComparison>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn run_cell(grid: &str, cfg: &AblationConfig, records: &[SegmentRecord], out_dir: Option<&Path>) -> CellReport {
    let id = cell_id(cfg);
    let mut cell = CellReport {
        cell_id: id.clone(),
        feature_set: cfg.feature_set.name().into(),
        framing: cfg.framing.name().into(),
        loss: cfg.loss.kind.name().into(),
        epochs: cfg.epochs,
        config: cfg.clone(),
        runs: Vec::new(),
        test_f1: Vec::new(),
        mean_f1: None,
        sd_f1: None,
        mean_weighted_f1: None,
        sd_weighted_f1: None,
        mean_mae: None,
        pca_components: None,
        error: None,
    };
    let cell_dir = out_dir.map(|d| d.join(grid).join(&id));
    let prepared = cfg
        .validate()
        .and_then(|_| split(records, cfg.split_ratio, cfg.seed, cfg.split_level))
        .and_then(|s| prepare_data::<f64>(cfg, &s));
    let data = match prepared {
        Ok(d) => d,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    cell.pca_components = data.pca.as_ref().map(|p| p.n_components());
    if let (Some(dir), Some(pca)) = (&cell_dir, &data.pca) {
        if let Err(e) = std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).and_then(|_| pca.save(&dir.join("pca.sdfm"))) {
            cell.error = Some(e.to_string());
            return cell;
        }
    }

    let results: Vec<Result<RunOutcome>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let trained = train_one(cfg, &data, cfg.run_seed(run))?;
            if let Some(dir) = &cell_dir {
                let run_dir = dir.join(run.to_string());
                std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
                let mut sections = trained.network.to_sections();
                sections.push(Section::text("config", cfg.to_toml()));
                sdfm::write_sections(&run_dir.join("checkpoint.sdfm"), &sections)?;
                let json = serde_json::to_vec_pretty(&trained.outcome).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let path = run_dir.join("run.json");
                std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            }
            Ok(trained.outcome)
        })
        .collect();
    for (run, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => cell.runs.push(o),
            Err(e) => {
                cell.error.get_or_insert_with(|| format!("run {run}: {e}"));
            }
        }
    }
    if !cell.runs.is_empty() {
        cell.test_f1 = cell.runs.iter().map(|r| r.test.macro_f1).collect();
        let (m, s) = mean_sd(&cell.test_f1);
        let (wm, ws) = mean_sd(&cell.runs.iter().map(|r| r.test.weighted_f1).collect::<Vec<_>>());
        let (mae, _) = mean_sd(&cell.runs.iter().map(|r| r.test.mae).collect::<Vec<_>>());
        cell.mean_f1 = finite(m);
        cell.sd_f1 = finite(s);
        cell.mean_weighted_f1 = finite(wm);
        cell.sd_weighted_f1 = finite(ws);
        cell.mean_mae = finite(mae);
    }
    cell
}

/// Trains every cell `runs` times (run seeds `seed + run`, one fixed split per cell) and,
/// when `out_dir` is given, writes per-run checkpoints under `<grid>/<cell>/<run>/` plus the
/// report files. A failing cell is recorded and the remaining cells still run.
pub fn run_ablation(grid_name: &str, grid: &[AblationConfig], records: &[SegmentRecord], out_dir: Option<&Path>) -> Result<AblationReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("ablation grid is empty".into()));
    }
    let mut ids: Vec<String> = grid.iter().map(cell_id).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != grid.len() {
        return Err(Error::InvalidArgument("ablation grid repeats a cell".into()));
    }
    let cells: Vec<CellReport> = grid.par_iter().map(|c| run_cell(grid_name, c, records, out_dir)).collect();
    let mut ordinal_comparison = Vec::new();
    for fs in [FeatureSet::FaceOnly, FeatureSet::PcaFused] {
        let mae = |kind: LossKind| {
            cells
                .iter()
                .find(|c| c.config.feature_set == fs && c.config.loss.kind == kind)
                .and_then(|c| c.mean_mae)
        };
        if let (Some(ce_mae), Some(spce_mae)) = (mae(LossKind::Ce), mae(LossKind::Spce)) {
            ordinal_comparison.push(OrdinalComparison {
                feature_set: fs.name().into(),
                ce_mae,
                spce_mae,
                spce_not_worse: spce_mae <= ce_mae,
            });
        }
    }
    let report = AblationReport {
        grid: grid_name.into(),
        records: records.len(),
        cells,
        ordinal_comparison,
    };
    if let Some(dir) = out_dir {
        report.write(&dir.join(grid_name))?;
    }
    Ok(report)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl AblationReport {
    /// `report.csv`, `summary.json` and `f1_bars.png` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("summary.json");
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        self.plot(&dir.join("f1_bars.png"))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record([
            "cell_id",
            "feature_set",
            "framing",
            "loss",
            "epochs",
            "per_run_f1",
            "mean_f1",
            "sd_f1",
            "mean_weighted_f1",
            "mean_mae",
            "status",
        ])
        .map_err(to_err)?;
        for c in &self.cells {
            let runs = c.test_f1.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
            let status = c.error.clone().unwrap_or_else(|| "ok".into());
            w.write_record([
                c.cell_id.clone(),
                c.feature_set.clone(),
                c.framing.clone(),
                c.loss.clone(),
                c.epochs.to_string(),
                runs,
                opt(c.mean_f1),
                opt(c.sd_f1),
                opt(c.mean_weighted_f1),
                opt(c.mean_mae),
                status,
            ])
            .map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn plot(&self, path: &Path) -> Result<()> {
        let groups: Vec<String> = self.cells.iter().map(|c| c.cell_id.clone()).collect();
        let series = BarSeries {
            label: "test macro F1 (mean +/- sd)".into(),
            values: self.cells.iter().map(|c| c.mean_f1.unwrap_or(f64::NAN)).collect(),
            errors: self.cells.iter().map(|c| c.sd_f1.unwrap_or(0.0)).collect(),
        };
        grouped_bar_chart(path, &format!("{} ablation", self.grid), &groups, &[series], 1.0)
    }

    pub fn read_summary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
