//! `disclosure`: synthesize corpora, condition features, train and ablate the two-stream
//! network, run SVM baselines and re-render reports.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "disclosure", version, about = "Self-disclosure score recognition experiments")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root for default output directories (`<root>/<command>`).
    #[arg(long, global = true, env = "SDR_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled corpus (manifest plus feature files).
    Synth(SynthArgs),
    /// Interpolate, smooth, normalize and optionally PCA-fuse the features of a manifest.
    Extract(ExtractArgs),
    /// Train one configuration for `runs` seeds and report test macro F1.
    Train(TrainArgs),
    /// Run a named ablation grid.
    Ablate(AblateArgs),
    /// Cross-validated RBF SVM baselines on mean-pooled features.
    Baseline(BaselineArgs),
    /// Re-render tables and charts from a stored summary.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of score classes (scores 1..=classes).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Segments per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub participants: Option<usize>,
    /// Signal-to-noise ratio; `inf` for noise-free frames.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Width of the action-unit + gaze family; 0 omits it.
    #[arg(long)]
    pub au_gaze_dim: Option<usize>,
    /// Probability that a visual frame is missing.
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Also write 16 kHz waveforms under `wav/`.
    #[arg(long)]
    pub waveforms: bool,
    /// TOML file with a full synthetic spec; flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default `<output-root>/synth`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Compute MFCCs from `<dir>/<segment_id>.wav` instead of copying the audio features.
    #[arg(long)]
    pub wav_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 256)]
    pub n_coeffs: usize,
    /// Per-coefficient mean and variance normalization of the audio stream.
    #[arg(long)]
    pub cmvn: bool,
    /// Savitzky-Golay smoothing of the visual families.
    #[arg(long)]
    pub smooth: bool,
    #[arg(long, default_value_t = 11)]
    pub savgol_window: usize,
    #[arg(long, default_value_t = 3)]
    pub savgol_order: usize,
    /// Add a `pca` family retaining this fraction of variance, fit on every record.
    #[arg(long)]
    pub pca_variance: Option<f64>,
    /// Output directory (default `<output-root>/extract`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by `train` and `ablate`; each overrides the matching config-file key.
#[derive(Args, Debug)]
pub struct TrainingFlags {
    /// TOML config with [data], [features], [model], [loss] and [train] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus manifest (data.manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Split seed; run r uses seed + r (data.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// segment or participant (data.split_level).
    #[arg(long)]
    pub split_level: Option<String>,
    /// face_only or pca_fused (features.feature_set).
    #[arg(long)]
    pub feature_set: Option<String>,
    /// Savitzky-Golay smoothing of visual features (features.smooth).
    #[arg(long)]
    pub smooth: bool,
    /// ce, ce_ls, spce or mse (loss.kind).
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Independent training runs per configuration (train.runs).
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Output directory (default `<output-root>/train`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Grid name; `paper8` crosses {face_only, pca_fused} with {ce, ce_ls, spce, mse}.
    #[arg(long, default_value = "paper8")]
    pub grid: String,
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Output directory (default `<output-root>/ablate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature families (`audio` or a visual family); default all.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<String>,
    /// Fold assignment seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Soft-margin penalty.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// RBF width; default is the median heuristic per fold.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 11)]
    pub savgol_window: usize,
    #[arg(long, default_value_t = 3)]
    pub savgol_order: usize,
    /// Output directory (default `<output-root>/baseline`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding `summary.json` or `baseline_summary.json`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (default: the input directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()?;
    }
    let out = |given: &Option<PathBuf>, name: &str| given.clone().unwrap_or_else(|| cli.output_root.join(name));
    match &cli.command {
        Command::Synth(a) => commands::synth(a, &out(&a.out, "synth")),
        Command::Extract(a) => commands::extract(a, &out(&a.out, "extract")),
        Command::Train(a) => commands::train(a, &out(&a.out, "train")),
        Command::Ablate(a) => commands::ablate(a, &out(&a.out, "ablate")),
        Command::Baseline(a) => commands::baseline(a, &out(&a.out, "baseline")),
        Command::Report(a) => commands::report(a, a.out.as_ref().unwrap_or(&a.input)),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
