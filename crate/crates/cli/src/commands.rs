use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fredf::data::{NormStats, Prepared, WindowPair};
use fredf::eval::{self, MetricPair, Metrics, ReportRow, Variant, WeightLossReport};
use fredf::model::{self, Checkpoint, ExecMode};
use fredf::numerics::RealTensor;
use fredf::spectral;
use fredf::training::{self, ClassCheck, TrainReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::emit_plot;
use crate::Common;

/// Finite differences touch every parameter twice; beyond this it takes too long.
const GRADCHECK_MAX_PARAMS: usize = 20_000;

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_rows(path: &Path, rows: &[ReportRow]) -> CliResult<()> {
    let mut s = String::from("dataset,horizon,variant,seed,mse,mae,runtime\n");
    for r in rows {
        let rt = r.runtime.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.dataset, r.horizon, r.variant, r.seed, r.mse, r.mae, rt);
    }
    std::fs::write(path, s).map_err(|e| CliError::output(path, e))
}

/// Per-seed training record written next to each checkpoint.
#[derive(Debug, Serialize, Deserialize)]
struct SeedRecord {
    row: ReportRow,
    report: TrainReport,
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    dataset: &'a str,
    horizon: usize,
    variant: String,
    mean: MetricPair,
    rows: Vec<ReportRow>,
}

pub fn train(c: &Common) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(c)?;
    let data = cfg.prepare()?;
    cfg.ensure_out()?;
    let name = cfg.dataset_name();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        let run = eval::run_variant(cfg.variant, &data, &cfg.train, &cfg.model, seed, &name, c.timings)?;
        let ckpt = cfg.out.join(format!("seed{seed}.ckpt"));
        Checkpoint {
            config: cfg.model.clone(),
            params: run.params.clone(),
            stats: Some(data.stats.clone()),
        }
        .save(&ckpt)?;
        write_json(
            &ckpt.with_extension("json"),
            &SeedRecord {
                row: run.row.clone(),
                report: run.report.clone(),
            },
        )?;
        println!(
            "seed {seed}: test mse {:.6} mae {:.6} (best epoch {}, {} steps) -> {}",
            run.test.mse,
            run.test.mae,
            run.report.best_epoch,
            run.report.total_steps,
            ckpt.display()
        );
        runs.push((seed, run.test));
        rows.push(run.row);
    }
    let mean = MetricPair::mean_over(&name, cfg.model.horizon, &runs)?;
    println!("mean over {} seeds: mse {:.6} mae {:.6}", runs.len(), mean.mse, mean.mae);
    write_json(
        &cfg.out.join("summary.json"),
        &TrainSummary {
            dataset: &name,
            horizon: cfg.model.horizon,
            variant: cfg.variant.to_string(),
            mean,
            rows,
        },
    )
}

/// Loads a checkpoint and prepares the dataset with the checkpoint's shape.
fn with_checkpoint(c: &Common, path: &Path) -> CliResult<(RunConfig, Checkpoint, Prepared)> {
    let mut cfg = RunConfig::resolve(c)?;
    if !path.is_file() {
        return Err(CliError::Data(format!("checkpoint not found: {}", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    for (flag, given, stored) in [
        ("--horizon", c.horizon, ck.config.horizon),
        ("--lookback", c.lookback, ck.config.lookback),
        ("--dim", c.dim, ck.config.dim),
        ("--layers", c.layers, ck.config.layers),
    ] {
        if given.is_some_and(|g| g != stored) {
            return Err(CliError::Config(format!("{flag} {} disagrees with the checkpoint ({stored})", given.unwrap())));
        }
    }
    cfg.model = ck.config.clone();
    let data = cfg.prepare()?;
    if cfg.model.channels != ck.config.channels {
        return Err(CliError::Config(format!(
            "dataset has {} channels, checkpoint expects {}",
            cfg.model.channels, ck.config.channels
        )));
    }
    Ok((cfg, ck, data))
}

fn stats_for<'a>(ck: &'a Checkpoint, data: &'a Prepared) -> &'a NormStats {
    ck.stats.as_ref().unwrap_or(&data.stats)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    dataset: String,
    horizon: usize,
    checkpoint: PathBuf,
    variant: String,
    normalized: Metrics,
    /// Present only with `--raw-scale`.
    raw_scale: Option<Metrics>,
}

pub fn eval(c: &Common, checkpoint: &Path) -> CliResult<()> {
    let (cfg, ck, data) = with_checkpoint(c, checkpoint)?;
    cfg.ensure_out()?;
    let test = cfg.variant.mask_inputs(&data.test, cfg.model.lookback)?;
    let mode = cfg.train.mode;
    let normalized = eval::evaluate(&ck.params, &test, &cfg.model, mode)?;
    let raw_scale = if c.raw_scale {
        Some(eval::evaluate_scaled(&ck.params, &test, &cfg.model, mode, Some(stats_for(&ck, &data)))?)
    } else {
        None
    };
    println!("normalized: mse {:.6} mae {:.6}", normalized.mse, normalized.mae);
    if let Some(r) = &raw_scale {
        println!("raw scale:  mse {:.6} mae {:.6}", r.mse, r.mae);
    }
    write_json(
        &cfg.out.join("metrics.json"),
        &EvalReport {
            dataset: cfg.dataset_name(),
            horizon: cfg.model.horizon,
            checkpoint: checkpoint.to_path_buf(),
            variant: cfg.variant.to_string(),
            normalized,
            raw_scale,
        },
    )
}

pub fn predict(c: &Common, checkpoint: &Path) -> CliResult<()> {
    let (cfg, ck, data) = with_checkpoint(c, checkpoint)?;
    cfg.ensure_out()?;
    let test = cfg.variant.mask_inputs(&data.test, cfg.model.lookback)?;
    let preds = eval::predict(&ck.params, &test, &cfg.model, cfg.train.mode)?;
    let stats = stats_for(&ck, &data);
    let table = cfg.load_table()?;
    let mut s = String::from("start_row,step");
    for name in &table.channels {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (w, p) in test.iter().zip(&preds) {
        let p = if c.raw_scale { stats.denormalize(p)? } else { p.clone() };
        for step in 0..p.rows() {
            let _ = write!(s, "{},{step}", w.origin + cfg.model.lookback);
            for v in p.row(step) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    let path = cfg.out.join("predictions.csv");
    std::fs::write(&path, s).map_err(|e| CliError::output(&path, e))?;
    println!("{} forecasts -> {}", preds.len(), path.display());
    Ok(())
}

pub fn mask_experiment(c: &Common) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(c)?;
    let data = cfg.prepare()?;
    cfg.ensure_out()?;
    let r = eval::mask_experiment(&data, &cfg.train, &cfg.model, &cfg.seeds(), &cfg.dataset_name(), c.timings)?;
    let mut s = String::from("task,variant,mse,mae,seeds\n");
    for t in &r.tasks {
        let seeds: Vec<String> = t.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{},{},{},{},{}", t.task, t.variant, t.mse, t.mae, seeds.join(" "));
        println!("{:<9} mse {:.6} mae {:.6}", t.task, t.mse, t.mae);
    }
    let csv = cfg.out.join("mask_report.csv");
    std::fs::write(&csv, s).map_err(|e| CliError::output(&csv, e))?;
    write_rows(&cfg.out.join("mask_rows.csv"), &r.rows)?;
    write_json(&cfg.out.join("mask_report.json"), &r)
}

pub fn ablate(c: &Common) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(c)?;
    if cfg.variant == Variant::Full {
        return Err(CliError::Config("ablate needs --variant other than `full`".into()));
    }
    let data = cfg.prepare()?;
    cfg.ensure_out()?;
    let r = eval::run_ablation(cfg.variant, &data, &cfg.train, &cfg.model, &cfg.seeds(), &cfg.dataset_name(), c.timings)?;
    println!("full:      mse {:.6} mae {:.6}", r.full.mse, r.full.mae);
    println!("{}: mse {:.6} mae {:.6}", r.variant, r.ablated.mse, r.ablated.mae);
    if let Some(d) = r.operator_max_diff {
        println!("per-bin vs fused-spectrum max forecast difference {d:.3e}");
    }
    let stem = format!("ablation_{}", r.variant.replace(['(', ')'], "_").trim_end_matches('_'));
    write_rows(&cfg.out.join(format!("{stem}.csv")), &r.rows)?;
    write_json(&cfg.out.join(format!("{stem}.json")), &r)
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    mode: ExecMode,
    h: f64,
    tolerance: f64,
    classes: Vec<ClassCheck>,
}

pub fn gradcheck(c: &Common) -> CliResult<()> {
    let cfg = RunConfig::resolve(c)?;
    cfg.model.validate()?;
    cfg.ensure_out()?;
    let seed = cfg.seeds()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model::init_parameters(&cfg.model, seed)?;
    let n = params.num_params();
    if n > GRADCHECK_MAX_PARAMS {
        return Err(CliError::Config(format!(
            "gradcheck perturbs every parameter; {n} exceeds the limit of {GRADCHECK_MAX_PARAMS} (use a smaller --dim or --lookback)"
        )));
    }
    // move fusion weights off their symmetric initial value
    for w in &mut params.fusion.layers {
        for v in w.data_mut() {
            *v = rng.random_range(0.5..1.5);
        }
    }
    let mut random = |rows: usize| {
        let ch = cfg.model.channels;
        RealTensor::new(vec![rows, ch], (0..rows * ch).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let pair = WindowPair {
        x: random(cfg.model.lookback)?,
        y: random(cfg.model.horizon)?,
        origin: 0,
    };
    let (h, tol) = (1e-6, 1e-5);
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    println!("{:<6} {:<10} {:>8} {:>12}  result", "mode", "class", "entries", "max rel err");
    for mode in [ExecMode::Fast, ExecMode::Naive] {
        let classes = training::gradient_check(&params, &cfg.model, &pair, mode, h, tol)?;
        for k in &classes {
            println!(
                "{:<6} {:<10} {:>8} {:>12.3e}  {}",
                format!("{mode:?}").to_lowercase(),
                k.class,
                k.entries,
                k.max_rel_err,
                if k.passed { "pass" } else { "FAIL" }
            );
            if !k.passed {
                failed.push(format!("{}/{mode:?}", k.class));
            }
        }
        reports.push(GradcheckReport {
            mode,
            h,
            tolerance: tol,
            classes,
        });
    }
    write_json(&cfg.out.join("gradcheck.json"), &reports)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!("gradient check failed for {}", failed.join(", "))))
    }
}

#[derive(Debug, Serialize)]
struct BandSummary {
    band: &'static str,
    bins: (usize, usize),
    mean_abs_weight: f64,
    mean_loss: f64,
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    dataset: String,
    checkpoint: PathBuf,
    correlation: WeightLossReport,
    /// Checkpoint weights and test-split per-frequency losses, per band.
    bands: Vec<BandSummary>,
    test_frequency_losses: Vec<f64>,
}

pub fn diagnose(c: &Common, checkpoint: &Path, report: Option<&Path>) -> CliResult<()> {
    let (cfg, ck, data) = with_checkpoint(c, checkpoint)?;
    cfg.ensure_out()?;
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| checkpoint.with_extension("json"));
    let record: SeedRecord = read_json(&report_path)?;
    let correlation = eval::weight_loss_correlation(&record.report.epochs)?;
    let test = cfg.variant.mask_inputs(&data.test, cfg.model.lookback)?;
    let losses = eval::per_frequency_losses(&ck.params, &test, &cfg.model, cfg.train.mode)?;
    let w = ck.params.fusion.layers[cfg.model.layers - 1].data();
    let p = spectral::band_partition(cfg.model.bins())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let bands: Vec<BandSummary> = [("low", p.low), ("mid", p.mid), ("high", p.high)]
        .into_iter()
        .map(|(band, b)| {
            let abs: Vec<f64> = w[b.lo..b.hi].iter().map(|v| v.abs()).collect();
            BandSummary {
                band,
                bins: (b.lo, b.hi),
                mean_abs_weight: mean(&abs),
                mean_loss: mean(&losses[b.lo..b.hi]),
            }
        })
        .collect();
    for b in &bands {
        println!(
            "{:<4} bins {:>3}..{:<3} mean |W| {:.4}  mean loss {:.4}",
            b.band, b.bins.0, b.bins.1, b.mean_abs_weight, b.mean_loss
        );
    }
    let defined: Vec<f64> = correlation.pearson.iter().flatten().copied().collect();
    if !defined.is_empty() {
        println!(
            "weight/loss correlation over {} snapshots: mean r {:.4} ({} of {} bins defined)",
            correlation.snapshots,
            mean(&defined),
            defined.len(),
            correlation.pearson.len()
        );
    }
    write_json(
        &cfg.out.join("weight_loss.json"),
        &DiagnoseReport {
            dataset: cfg.dataset_name(),
            checkpoint: checkpoint.to_path_buf(),
            correlation,
            bands,
            test_frequency_losses: losses,
        },
    )
}

pub fn plot(c: &Common, checkpoint: &Path, window: usize, channel: Option<usize>) -> CliResult<()> {
    let (cfg, ck, data) = with_checkpoint(c, checkpoint)?;
    cfg.ensure_out()?;
    let test = cfg.variant.mask_inputs(&data.test, cfg.model.lookback)?;
    let w = test
        .get(window)
        .ok_or_else(|| CliError::Config(format!("window {window} out of range ({} test windows)", test.len())))?;
    let ch = channel.unwrap_or(cfg.model.channels - 1);
    if ch >= cfg.model.channels {
        return Err(CliError::Config(format!("channel {ch} out of range ({} channels)", cfg.model.channels)));
    }
    let mut pred = model::forward(&w.x, &ck.params, &cfg.model, cfg.train.mode, None)?;
    let mut truth = w.y.clone();
    if c.raw_scale {
        let stats = stats_for(&ck, &data);
        pred = stats.denormalize(&pred)?;
        truth = stats.denormalize(&truth)?;
    }
    let column = |t: &RealTensor| (0..t.rows()).map(|r| t.get(r, ch)).collect::<Vec<f64>>();
    let svg = cfg.out.join("forecast.svg");
    let csv = emit_plot(&[("forecast", &column(&pred))], &column(&truth), &svg)?;
    println!("{} and {}", svg.display(), csv.display());
    Ok(())
}
