//! Metrics, per-frequency loss decomposition, weight/loss diagnostics and the
//! ablation runner.

mod ablation;

pub use ablation::{
    mask_experiment, run_ablation, run_variant, AblationReport, BandChoice, MaskReport, MaskTask, ReportRow,
    Variant, VariantRun,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, WindowPair};
use crate::error::{Error, Result};
use crate::model::{self, ExecMode, ModelConfig, ParameterSet};
use crate::numerics::RealTensor;
use crate::training::EpochRecord;

/// Mean errors over a set of windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
}

/// Seed-averaged metrics for one dataset and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub mse: f64,
    pub mae: f64,
    pub horizon: usize,
    pub dataset: String,
    pub seeds: Vec<u64>,
}

impl MetricPair {
    /// Mean of per-seed metrics; `runs` pairs each seed with its result.
    pub fn mean_over(dataset: &str, horizon: usize, runs: &[(u64, Metrics)]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("no runs to average".into()));
        }
        let k = runs.len() as f64;
        Ok(Self {
            mse: runs.iter().map(|(_, m)| m.mse).sum::<f64>() / k,
            mae: runs.iter().map(|(_, m)| m.mae).sum::<f64>() / k,
            horizon,
            dataset: dataset.to_string(),
            seeds: runs.iter().map(|(s, _)| *s).collect(),
        })
    }
}

/// Forecasts for every window, in window order.
pub fn predict(params: &ParameterSet, windows: &[WindowPair], mcfg: &ModelConfig, mode: ExecMode) -> Result<Vec<RealTensor>> {
    params.check(mcfg)?;
    windows
        .par_iter()
        .map(|w| model::forward(&w.x, params, mcfg, mode, None))
        .collect()
}

/// Mean MSE and MAE over all windows on the normalized scale.
pub fn evaluate(params: &ParameterSet, windows: &[WindowPair], mcfg: &ModelConfig, mode: ExecMode) -> Result<Metrics> {
    evaluate_scaled(params, windows, mcfg, mode, None)
}

/// As [`evaluate`], optionally mapping forecasts and targets back to the raw
/// scale before scoring.
pub fn evaluate_scaled(
    params: &ParameterSet,
    windows: &[WindowPair],
    mcfg: &ModelConfig,
    mode: ExecMode,
    raw: Option<&NormStats>,
) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Empty("evaluation needs at least one window".into()));
    }
    params.check(mcfg)?;
    let per_window: Vec<Result<(f64, f64, usize)>> = windows
        .par_iter()
        .map(|w| {
            let mut pred = model::forward(&w.x, params, mcfg, mode, None)?;
            let mut truth = w.y.clone();
            if let Some(stats) = raw {
                pred = stats.denormalize(&pred)?;
                truth = stats.denormalize(&truth)?;
            }
            if pred.shape() != truth.shape() {
                return Err(Error::shape("evaluate", format!("{:?} vs {:?}", pred.shape(), truth.shape())));
            }
            let (mut se, mut ae) = (0.0, 0.0);
            for (a, b) in pred.data().iter().zip(truth.data()) {
                se += (a - b) * (a - b);
                ae += (a - b).abs();
            }
            Ok((se, ae, pred.len()))
        })
        .collect();
    let mut sums = per_window.into_iter().collect::<Result<Vec<_>>>()?;
    // sorted reduction: the result does not depend on window order
    sums.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let count: usize = sums.iter().map(|s| s.2).sum();
    let se: f64 = sums.iter().map(|s| s.0).sum();
    let ae: f64 = sums.iter().map(|s| s.1).sum();
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        windows: windows.len(),
    })
}

/// Forecast built from final-block frequency `m` alone, for every bin.
pub fn frequency_forecasts(
    x: &RealTensor,
    params: &ParameterSet,
    mcfg: &ModelConfig,
    mode: ExecMode,
) -> Result<Vec<RealTensor>> {
    let comps = model::frequency_components(x, params, mcfg, mode)?;
    comps
        .weighted
        .iter()
        .map(|z| model::project(&z.slice_rows(mcfg.lookback, mcfg.padded_len())?, params))
        .collect()
}

/// `l_m`: MSE of the single-frequency forecast of bin `m`, averaged over windows.
pub fn per_frequency_losses(
    params: &ParameterSet,
    windows: &[WindowPair],
    mcfg: &ModelConfig,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Err(Error::Empty("per-frequency losses need at least one window".into()));
    }
    let per_window: Vec<Result<Vec<f64>>> = windows
        .par_iter()
        .map(|w| {
            frequency_forecasts(&w.x, params, mcfg, mode)?
                .iter()
                .map(|f| crate::training::mse_loss(f, &w.y))
                .collect()
        })
        .collect();
    let mut acc = vec![0.0; mcfg.bins()];
    for r in per_window {
        for (a, l) in acc.iter_mut().zip(r?) {
            *a += l;
        }
    }
    let k = windows.len() as f64;
    Ok(acc.into_iter().map(|a| a / k).collect())
}

/// Sample Pearson correlation; `None` when either input is constant or
/// shorter than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Final-block fusion weights and per-frequency losses over a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLossReport {
    /// `W_m` at the last snapshot.
    pub weights: Vec<f64>,
    /// `l_m` at the last snapshot.
    pub losses: Vec<f64>,
    /// Correlation of the `W_m` and `l_m` trajectories; null where undefined.
    pub pearson: Vec<Option<f64>>,
    /// Sample covariance of the same trajectories.
    pub covariance: Vec<f64>,
    pub snapshots: usize,
}

/// Correlates each frequency's weight trajectory with its loss trajectory
/// across epoch snapshots.
pub fn weight_loss_correlation(records: &[EpochRecord]) -> Result<WeightLossReport> {
    let snaps: Vec<(&Vec<f64>, &Vec<f64>)> = records
        .iter()
        .filter_map(|r| Some((r.fusion.last()?, r.frequency_losses.as_ref()?)))
        .collect();
    if snaps.len() < 3 {
        return Err(Error::Empty(format!(
            "weight/loss correlation needs at least 3 snapshots, got {}",
            snaps.len()
        )));
    }
    let k = snaps[0].0.len();
    if snaps.iter().any(|(w, l)| w.len() != k || l.len() != k) {
        return Err(Error::shape("weight_loss_correlation", "snapshots disagree on the number of bins"));
    }
    let (mut pearsons, mut covs) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for m in 0..k {
        let w: Vec<f64> = snaps.iter().map(|(w, _)| w[m]).collect();
        let l: Vec<f64> = snaps.iter().map(|(_, l)| l[m]).collect();
        pearsons.push(pearson(&w, &l));
        covs.push(covariance(&w, &l));
    }
    let (w_last, l_last) = snaps[snaps.len() - 1];
    Ok(WeightLossReport {
        weights: w_last.clone(),
        losses: l_last.clone(),
        pearson: pearsons,
        covariance: covs,
        snapshots: snaps.len(),
    })
}
