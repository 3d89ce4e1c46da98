use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, MetricPair, Metrics};
use crate::data::{mask_band_inputs, Prepared, WindowPair};
use crate::error::{Error, Result};
use crate::model::{self, ExecMode, ModelConfig, ParameterSet, TransferBank};
use crate::spectral::{self, BandSpec};
use crate::training::{self, TrainConfig, TrainReport};

/// Band removed from the input windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandChoice {
    None,
    Low,
    Mid,
    High,
}

impl BandChoice {
    pub const ALL: [BandChoice; 4] = [BandChoice::None, BandChoice::Low, BandChoice::Mid, BandChoice::High];

    fn name(self) -> &'static str {
        match self {
            BandChoice::None => "none",
            BandChoice::Low => "low",
            BandChoice::Mid => "mid",
            BandChoice::High => "high",
        }
    }

    /// Bins of a `lookback`-step window this choice removes.
    pub fn band(self, lookback: usize) -> Result<Option<BandSpec>> {
        let p = spectral::band_partition(spectral::bins_for(lookback))?;
        Ok(match self {
            BandChoice::None => None,
            BandChoice::Low => Some(p.low),
            BandChoice::Mid => Some(p.mid),
            BandChoice::High => Some(p.high),
        })
    }
}

/// One model variant of the ablation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variant {
    Full,
    /// Fusion weights frozen at one.
    StaticFusion,
    /// Every transfer matrix frozen at the identity.
    NoTransfer,
    /// Weights applied to the spectrum before a single inverse transform.
    FuseOnSpectrum,
    BandMask(BandChoice),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::StaticFusion => f.write_str("static_fusion"),
            Variant::NoTransfer => f.write_str("no_transfer"),
            Variant::FuseOnSpectrum => f.write_str("fuse_on_spectrum"),
            Variant::BandMask(b) => write!(f, "band_mask({})", b.name()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        let band = |b: &str| {
            BandChoice::ALL
                .into_iter()
                .find(|c| c.name() == b)
                .map(Variant::BandMask)
                .ok_or_else(|| Error::Config(format!("unknown band `{b}` (none, low, mid, high)")))
        };
        match s.as_str() {
            "full" => Ok(Variant::Full),
            "static_fusion" | "static" => Ok(Variant::StaticFusion),
            "no_transfer" => Ok(Variant::NoTransfer),
            "fuse_on_spectrum" => Ok(Variant::FuseOnSpectrum),
            _ => {
                if let Some(inner) = s.strip_prefix("band_mask(").and_then(|r| r.strip_suffix(')')) {
                    band(inner)
                } else if let Some(inner) = s.strip_prefix("band_mask:").or_else(|| s.strip_prefix("band_mask=")) {
                    band(inner)
                } else {
                    Err(Error::Config(format!("unknown variant `{s}`")))
                }
            }
        }
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl Variant {
    /// Training configuration for this variant derived from `base`.
    pub fn train_config(self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        let frozen = base.freeze.fusion || base.freeze.transfer;
        match self {
            Variant::StaticFusion | Variant::NoTransfer if frozen => {
                return Err(Error::Config(format!(
                    "variant {self} cannot be combined with a configuration that already freezes parameters"
                )))
            }
            Variant::StaticFusion => cfg.freeze.fusion = true,
            Variant::NoTransfer => cfg.freeze.transfer = true,
            Variant::FuseOnSpectrum => cfg.mode = ExecMode::Fast,
            Variant::Full | Variant::BandMask(_) => {}
        }
        Ok(cfg)
    }

    /// Input windows as this variant sees them: band-masked variants zero
    /// their band, every other variant passes windows through.
    pub fn mask_inputs(self, windows: &[WindowPair], lookback: usize) -> Result<Vec<WindowPair>> {
        match self {
            Variant::BandMask(b) => match b.band(lookback)? {
                Some(band) => mask_band_inputs(windows, band),
                None => Ok(windows.to_vec()),
            },
            _ => Ok(windows.to_vec()),
        }
    }
}

/// One line of a report: `{dataset, horizon, variant, seed, mse, mae, runtime}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub horizon: usize,
    pub variant: String,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    /// Seconds; null unless timing was requested.
    pub runtime: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub row: ReportRow,
    pub test: Metrics,
    pub params: ParameterSet,
    pub report: TrainReport,
}

/// Trains `variant` from `seed` and scores it on the test windows.
pub fn run_variant(
    variant: Variant,
    data: &Prepared,
    base: &TrainConfig,
    mcfg: &ModelConfig,
    seed: u64,
    dataset: &str,
    timed: bool,
) -> Result<VariantRun> {
    let start = Instant::now();
    let mut cfg = variant.train_config(base)?;
    cfg.seed = seed;
    let train = variant.mask_inputs(&data.train, mcfg.lookback)?;
    let val = variant.mask_inputs(&data.val, mcfg.lookback)?;
    let test = variant.mask_inputs(&data.test, mcfg.lookback)?;

    let mut init = model::init_parameters(mcfg, seed)?;
    if cfg.freeze.transfer {
        init.bank = TransferBank::identity(mcfg.layers, mcfg.bins(), mcfg.dim);
    }
    let (params, report) = training::train_from(init, &train, &val, &cfg, mcfg, timed)?;
    let metrics = evaluate(&params, &test, mcfg, cfg.mode)?;
    Ok(VariantRun {
        row: ReportRow {
            dataset: dataset.to_string(),
            horizon: mcfg.horizon,
            variant: variant.to_string(),
            seed,
            mse: metrics.mse,
            mae: metrics.mae,
            runtime: timed.then(|| start.elapsed().as_secs_f64()),
        },
        test: metrics,
        params,
        report,
    })
}

/// Paired comparison of one variant against the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variant: String,
    /// Full-model row then variant row, for every seed.
    pub rows: Vec<ReportRow>,
    pub full: MetricPair,
    pub ablated: MetricPair,
    /// Largest forecast difference between the per-bin and the fused-spectrum
    /// evaluation of the trained variant (only for `fuse_on_spectrum`).
    pub operator_max_diff: Option<f64>,
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    Ok(())
}

/// Runs the full model and `variant` on identical seeds and data.
pub fn run_ablation(
    variant: Variant,
    data: &Prepared,
    base: &TrainConfig,
    mcfg: &ModelConfig,
    seeds: &[u64],
    dataset: &str,
    timed: bool,
) -> Result<AblationReport> {
    if variant == Variant::Full {
        return Err(Error::Config("ablation needs a variant other than `full`".into()));
    }
    check_seeds(seeds)?;
    variant.train_config(base)?;
    // the fused-spectrum variant is compared with the per-bin ordering
    let full_base = if variant == Variant::FuseOnSpectrum {
        TrainConfig {
            mode: ExecMode::Naive,
            ..base.clone()
        }
    } else {
        base.clone()
    };
    let pairs: Vec<Result<(VariantRun, VariantRun)>> = seeds
        .par_iter()
        .map(|&seed| {
            let full = run_variant(Variant::Full, data, &full_base, mcfg, seed, dataset, timed)?;
            let ablated = run_variant(variant, data, base, mcfg, seed, dataset, timed)?;
            Ok((full, ablated))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;

    let operator_max_diff = if variant == Variant::FuseOnSpectrum {
        let mut worst = 0.0f64;
        for (_, run) in &pairs {
            for w in data.test.iter().take(16) {
                let naive = model::forward(&w.x, &run.params, mcfg, ExecMode::Naive, None)?;
                let fast = model::forward(&w.x, &run.params, mcfg, ExecMode::Fast, None)?;
                worst = worst.max(naive.max_abs_diff(&fast));
            }
        }
        Some(worst)
    } else {
        None
    };

    let full_runs: Vec<(u64, Metrics)> = pairs.iter().map(|(f, _)| (f.row.seed, f.test)).collect();
    let var_runs: Vec<(u64, Metrics)> = pairs.iter().map(|(_, v)| (v.row.seed, v.test)).collect();
    Ok(AblationReport {
        variant: variant.to_string(),
        rows: pairs.iter().flat_map(|(f, v)| [f.row.clone(), v.row.clone()]).collect(),
        full: MetricPair::mean_over(dataset, mcfg.horizon, &full_runs)?,
        ablated: MetricPair::mean_over(dataset, mcfg.horizon, &var_runs)?,
        operator_max_diff,
    })
}

/// Seed-averaged result of one masking task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTask {
    /// `all`, `w/o low`, `w/o mid` or `w/o high`.
    pub task: String,
    pub variant: String,
    pub mse: f64,
    pub mae: f64,
    pub seeds: Vec<u64>,
    pub per_seed_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub dataset: String,
    pub horizon: usize,
    pub tasks: Vec<MaskTask>,
    pub rows: Vec<ReportRow>,
}

/// Trains on all frequencies and with each third of the input spectrum
/// removed, every task on the same seeds.
pub fn mask_experiment(
    data: &Prepared,
    base: &TrainConfig,
    mcfg: &ModelConfig,
    seeds: &[u64],
    dataset: &str,
    timed: bool,
) -> Result<MaskReport> {
    check_seeds(seeds)?;
    let jobs: Vec<(BandChoice, u64)> = BandChoice::ALL
        .iter()
        .flat_map(|&b| seeds.iter().map(move |&s| (b, s)))
        .collect();
    let runs: Vec<Result<VariantRun>> = jobs
        .par_iter()
        .map(|&(b, s)| run_variant(Variant::BandMask(b), data, base, mcfg, s, dataset, timed))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::with_capacity(4);
    for (i, b) in BandChoice::ALL.iter().enumerate() {
        let chunk = &runs[i * seeds.len()..(i + 1) * seeds.len()];
        let pairs: Vec<(u64, Metrics)> = chunk.iter().map(|r| (r.row.seed, r.test)).collect();
        let mean = MetricPair::mean_over(dataset, mcfg.horizon, &pairs)?;
        tasks.push(MaskTask {
            task: match b {
                BandChoice::None => "all".to_string(),
                other => format!("w/o {}", other.name()),
            },
            variant: Variant::BandMask(*b).to_string(),
            mse: mean.mse,
            mae: mean.mae,
            seeds: mean.seeds,
            per_seed_mse: chunk.iter().map(|r| r.test.mse).collect(),
        });
    }
    Ok(MaskReport {
        dataset: dataset.to_string(),
        horizon: mcfg.horizon,
        tasks,
        rows: runs.into_iter().map(|r| r.row).collect(),
    })
}
