use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::TypedValueParser as _;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod plot;

/// Train, evaluate and analyse frequency-domain forecasters.
#[derive(Debug, Parser)]
#[command(name = "fredf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed; writes checkpoints, reports and a mean summary.
    Train(Common),
    /// Score a checkpoint on the test split.
    Eval(WithCheckpoint),
    /// Write test-split forecasts of a checkpoint as CSV.
    Predict(WithCheckpoint),
    /// Train on all frequencies and with each input band removed.
    MaskExperiment(Common),
    /// Paired comparison of `--variant` against the full model.
    Ablate(Common),
    /// Compare analytic and finite-difference gradients per parameter class.
    Gradcheck(Common),
    /// Correlate fusion-weight and per-frequency loss trajectories of a run.
    Diagnose(Diagnose),
    /// Plot forecast against truth for one test window.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path, or `synthetic`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["96", "192", "336", "720"])
        .map(|s| s.parse::<usize>().unwrap()))]
    pub horizon: Option<usize>,
    /// Lookback length [default: 96]
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// One or more seeds, comma separated or repeated.
    #[arg(long = "seeds", visible_alias = "seed", value_delimiter = ',', num_args = 1..)]
    pub seeds: Vec<u64>,
    /// full, static_fusion, no_transfer, fuse_on_spectrum or band_mask(none|low|mid|high).
    #[arg(long)]
    pub variant: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report metrics on the original (denormalized) scale.
    #[arg(long)]
    pub raw_scale: bool,
    /// Record wall-clock runtimes in reports (makes them non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct WithCheckpoint {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct Diagnose {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training report of the run; defaults to the checkpoint path with a `.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Index of the test window.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    /// Channel to draw; defaults to the last one.
    #[arg(long)]
    pub channel: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Eval(a) => commands::eval(&a.common, &a.checkpoint),
        Command::Predict(a) => commands::predict(&a.common, &a.checkpoint),
        Command::MaskExperiment(c) => commands::mask_experiment(&c),
        Command::Ablate(c) => commands::ablate(&c),
        Command::Gradcheck(c) => commands::gradcheck(&c),
        Command::Diagnose(a) => commands::diagnose(&a.common, &a.checkpoint, a.report.as_deref()),
        Command::Plot(a) => commands::plot(&a.common, &a.checkpoint, a.window, a.channel),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fredf: {}: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
