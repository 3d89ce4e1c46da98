//! Objective, optimizer and the mini-batch training loop.

mod adam;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{self, DropoutKey, ExecMode, ModelConfig, ParamClass, ParameterSet, TransferBank};
use crate::numerics::{finite_difference_grad, relative_error, Gradients, RealTensor, Tape};

/// Mean of squared differences over every entry.
pub fn mse_loss(pred: &RealTensor, truth: &RealTensor) -> Result<f64> {
    pointwise_mean(pred, truth, "mse_loss", |d| d * d)
}

/// Mean of absolute differences over every entry.
pub fn mae(pred: &RealTensor, truth: &RealTensor) -> Result<f64> {
    pointwise_mean(pred, truth, "mae", f64::abs)
}

fn pointwise_mean(pred: &RealTensor, truth: &RealTensor, op: &'static str, f: impl Fn(f64) -> f64) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Empty(format!("{op} of empty tensors")));
    }
    let s: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| f(a - b)).sum();
    Ok(s / pred.len() as f64)
}

/// Parameter groups held fixed during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Freeze {
    pub fusion: bool,
    pub transfer: bool,
}

impl Freeze {
    fn frozen(&self, class: ParamClass) -> bool {
        match class {
            ParamClass::Fusion => self.fusion,
            ParamClass::TransferRe | ParamClass::TransferIm => self.transfer,
            ParamClass::Embed | ParamClass::Project => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub repeats: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
    pub mode: ExecMode,
    pub freeze: Freeze,
    /// Validation windows used for per-frequency loss snapshots (0 disables).
    pub freq_loss_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 4,
            max_epochs: 10,
            patience: 3,
            seed: 2024,
            repeats: 3,
            max_steps: None,
            clip_norm: None,
            mode: ExecMode::Fast,
            freeze: Freeze::default(),
            freq_loss_windows: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one validation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Counts validations without a new best; stops after `patience` of them.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    counter: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            counter: 0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        let epoch = self.seen;
        self.seen += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.counter = 0;
            StopDecision::Improved
        } else {
            self.counter += 1;
            if self.counter >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub steps: usize,
    /// Fusion weights of every block after this epoch.
    pub fusion: Vec<Vec<f64>>,
    /// Per-frequency validation losses of the last block, when tracked.
    pub frequency_losses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub total_steps: usize,
    pub stopped_early: bool,
    /// Wall-clock seconds; `None` unless timing was requested.
    pub wall_clock_secs: Option<f64>,
}

/// Loss and parameter gradients for one window.
pub fn sample_gradients(
    params: &ParameterSet,
    mcfg: &ModelConfig,
    pair: &WindowPair,
    mode: ExecMode,
    key: Option<DropoutKey>,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = model::forward_on_tape(&mut tape, &vars, mcfg, &pair.x, mode, key)?;
    let loss = tape.mse(out, &pair.y)?;
    let value = tape.real(loss)?.data()[0];
    let adj = tape.backward(loss)?;
    Ok((value, vars.gradients(&adj)))
}

/// Mean loss and mean gradient over a batch; members are evaluated in
/// parallel and reduced in batch order.
pub fn batch_gradients(
    params: &ParameterSet,
    mcfg: &ModelConfig,
    batch: &[&WindowPair],
    mode: ExecMode,
    keys: Option<(u64, u64)>,
) -> Result<(f64, Gradients)> {
    let results: Vec<Result<(f64, Gradients)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let key = keys.map(|(seed, step)| DropoutKey {
                seed,
                step,
                sample: i as u64,
            });
            sample_gradients(params, mcfg, pair, mode, key)
        })
        .collect();
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    let k = 1.0 / batch.len() as f64;
    total.scale(k);
    Ok((loss * k, total))
}

/// Trains from a seeded initialization; see [`train_from`].
pub fn train(
    train_windows: &[WindowPair],
    val_windows: &[WindowPair],
    cfg: &TrainConfig,
    mcfg: &ModelConfig,
) -> Result<(ParameterSet, TrainReport)> {
    let mut params = model::init_parameters(mcfg, cfg.seed)?;
    if cfg.freeze.transfer {
        params.bank = TransferBank::identity(mcfg.layers, mcfg.bins(), mcfg.dim);
    }
    train_from(params, train_windows, val_windows, cfg, mcfg, false)
}

/// Adam on shuffled mini-batches with early stopping on validation loss.
/// Returns the parameters of the best validation epoch.
pub fn train_from(
    mut params: ParameterSet,
    train_windows: &[WindowPair],
    val_windows: &[WindowPair],
    cfg: &TrainConfig,
    mcfg: &ModelConfig,
    timed: bool,
) -> Result<(ParameterSet, TrainReport)> {
    cfg.validate()?;
    params.check(mcfg)?;
    if train_windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    if val_windows.is_empty() {
        return Err(Error::Empty("no validation windows".into()));
    }
    let start = Instant::now();
    let frozen: Vec<bool> = params
        .tensor_names()
        .iter()
        .map(|(_, class)| cfg.freeze.frozen(*class))
        .collect();
    let mut state = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut steps = 0usize;
    let mut stopped_early = false;
    let dropout_on = mcfg.dropout > 0.0;
    let freq_subset = &val_windows[..cfg.freq_loss_windows.min(val_windows.len())];

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    'epochs: for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let batch: Vec<&WindowPair> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let keys = dropout_on.then_some((cfg.seed, steps as u64));
            let (loss, mut grads) = batch_gradients(&params, mcfg, &batch, cfg.mode, keys)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step: steps });
            }
            for (g, &f) in grads.0.iter_mut().zip(&frozen) {
                if f {
                    g.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            if let Some(c) = cfg.clip_norm {
                let norm = grads.norm();
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            adam_step(&mut params, &grads, &mut state, cfg.lr)?;
            loss_sum += loss;
            batches += 1;
            steps += 1;
        }
        if batches == 0 {
            break;
        }

        let val = eval::evaluate(&params, val_windows, mcfg, cfg.mode)?;
        if !val.mse.is_finite() {
            return Err(Error::Divergence { epoch, step: steps });
        }
        let frequency_losses = if freq_subset.is_empty() {
            None
        } else {
            Some(eval::per_frequency_losses(&params, freq_subset, mcfg, cfg.mode)?)
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: val.mse,
            steps,
            fusion: params.fusion.layers.iter().map(|w| w.data().to_vec()).collect(),
            frequency_losses,
        });
        match stopper.observe(val.mse) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }

    let report = TrainReport {
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_loss: stopper.best(),
        epochs,
        total_steps: steps,
        stopped_early,
        wall_clock_secs: timed.then(|| start.elapsed().as_secs_f64()),
    };
    Ok((best, report))
}

/// Worst analytic-vs-numeric disagreement within one parameter class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub class: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Compares tape gradients of the window loss with central differences of
/// step `h`, grouped by parameter class.
pub fn gradient_check(
    params: &ParameterSet,
    mcfg: &ModelConfig,
    pair: &WindowPair,
    mode: ExecMode,
    h: f64,
    tolerance: f64,
) -> Result<Vec<ClassCheck>> {
    params.check(mcfg)?;
    let (_, analytic) = sample_gradients(params, mcfg, pair, mode, None)?;
    let loss = |p: &ParameterSet| {
        let pred = model::forward(&pair.x, p, mcfg, mode, None)?;
        mse_loss(&pred, &pair.y)
    };
    let numeric = finite_difference_grad(loss, params, h)?;
    let names = params.tensor_names();
    let mut out: Vec<ClassCheck> = Vec::new();
    for class in ParamClass::ALL {
        let mut worst = 0.0f64;
        let mut entries = 0;
        for (t, (_, c)) in names.iter().enumerate() {
            if *c != class {
                continue;
            }
            for (a, n) in analytic.0[t].iter().zip(&numeric.0[t]) {
                worst = worst.max(relative_error(*a, *n));
                entries += 1;
            }
        }
        out.push(ClassCheck {
            class: class.name().to_string(),
            entries,
            max_rel_err: worst,
            passed: entries > 0 && worst < tolerance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
