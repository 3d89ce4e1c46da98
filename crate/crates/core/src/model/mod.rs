//! The forecaster: embedding, frequency blocks, projection.

mod checkpoint;
mod params;

pub use checkpoint::Checkpoint;

pub use params::{
    init_parameters, Affine, FusionWeights, Mlp, ModelConfig, ParamClass, ParamVars, ParameterSet,
    TransferBank,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RealTensor, Tape, Var};
use crate::spectral::{self, Spectrum};

/// How a frequency block evaluates its per-bin sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// One inverse transform of the weighted, transferred spectrum.
    #[default]
    Fast,
    /// One inverse transform per bin, then a weighted sum in the time domain.
    Naive,
}

impl std::str::FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(ExecMode::Fast),
            "naive" => Ok(ExecMode::Naive),
            other => Err(Error::Config(format!("unknown execution mode `{other}`"))),
        }
    }
}

/// Identifies one training-mode forward pass; dropout masks are a pure
/// function of these counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
    pub sample: u64,
}

impl DropoutKey {
    fn mask(&self, site: u64, len: usize, rate: f64) -> Vec<f64> {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for word in [self.step, self.sample, site] {
            h = splitmix(h ^ word);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let keep = 1.0 / (1.0 - rate);
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn apply_mlp(tape: &mut Tape, x: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut h = x;
    for (i, (w, b)) in layers.iter().enumerate() {
        if i > 0 {
            h = tape.tanh(h)?;
        }
        let y = tape.matmul(h, *w)?;
        h = tape.add_row(y, *b)?;
    }
    Ok(h)
}

fn dropout(tape: &mut Tape, x: Var, rate: f64, key: Option<DropoutKey>, site: u64) -> Result<Var> {
    match key {
        Some(k) if rate > 0.0 => {
            let len = tape.real(x)?.len();
            tape.mask_mul(x, k.mask(site, len, rate))
        }
        _ => Ok(x),
    }
}

/// One frequency block on the tape. `bank` is the `[K, D, D]` complex leaf and
/// `weights` the length-`K` fusion vector of this block.
pub fn fdblock_on_tape(tape: &mut Tape, m: Var, bank: Var, weights: Var, mode: ExecMode) -> Result<Var> {
    let spec = tape.rdft(m)?;
    match mode {
        ExecMode::Fast => {
            let out = tape.bin_transfer(spec, bank)?;
            let fused = tape.bin_scale(out, weights)?;
            tape.irdft(fused)
        }
        ExecMode::Naive => {
            let bins = tape.complex(spec)?.shape()[0];
            let mut parts = Vec::with_capacity(bins);
            for bin in 0..bins {
                let decoupled = tape.keep_bin(spec, bin)?;
                let out = tape.bin_transfer(decoupled, bank)?;
                parts.push(tape.irdft(out)?);
            }
            tape.weighted_sum(parts, weights)
        }
    }
}

/// Embedding of an `N x C` matrix, row by row.
pub fn embed_on_tape(tape: &mut Tape, x: Var, vars: &ParamVars) -> Result<Var> {
    apply_mlp(tape, x, &vars.embed)
}

/// Full forward pass on the tape, returning the `S x C` forecast node.
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    x: &RealTensor,
    mode: ExecMode,
    key: Option<DropoutKey>,
) -> Result<Var> {
    let hidden = encode_on_tape(tape, vars, cfg, x, mode, key)?;
    let y = apply_mlp(tape, hidden, &vars.project)?;
    tape.slice_rows(y, cfg.lookback, cfg.padded_len())
}

/// Everything before the projection: pad, embed, run every block.
fn encode_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    x: &RealTensor,
    mode: ExecMode,
    key: Option<DropoutKey>,
) -> Result<Var> {
    let padded = zero_pad(x, cfg)?;
    let input = tape.constant(padded);
    let mut h = embed_on_tape(tape, input, vars)?;
    h = dropout(tape, h, cfg.dropout, key, 0)?;
    for l in 0..cfg.layers {
        h = fdblock_on_tape(tape, h, vars.bank[l], vars.fusion[l], mode)?;
        h = dropout(tape, h, cfg.dropout, key, 1 + l as u64)?;
    }
    Ok(h)
}

/// Appends `S` zero rows to a `T x C` window.
pub fn zero_pad(x: &RealTensor, cfg: &ModelConfig) -> Result<RealTensor> {
    if x.shape() != [cfg.lookback, cfg.channels] {
        return Err(Error::shape(
            "forward",
            format!("input {:?}, expected [{}, {}]", x.shape(), cfg.lookback, cfg.channels),
        ));
    }
    let mut data = x.data().to_vec();
    data.resize(cfg.padded_len() * cfg.channels, 0.0);
    RealTensor::new(vec![cfg.padded_len(), cfg.channels], data)
}

/// Forecast for one `T x C` window. Dropout is active only when `key` is given.
pub fn forward(
    x: &RealTensor,
    params: &ParameterSet,
    cfg: &ModelConfig,
    mode: ExecMode,
    key: Option<DropoutKey>,
) -> Result<RealTensor> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(&mut tape, &vars, cfg, x, mode, key)?;
    Ok(tape.real(out)?.clone())
}

/// Inference-mode embedding of an `N x C` matrix.
pub fn embed(x: &RealTensor, params: &ParameterSet) -> Result<RealTensor> {
    let c = params.embed.layers[0].fan_in();
    if x.shape().len() != 2 || x.cols() != c {
        return Err(Error::shape("embed", format!("input {:?} for {} channels", x.shape(), c)));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let input = tape.constant(x.clone());
    let out = embed_on_tape(&mut tape, input, &vars)?;
    Ok(tape.real(out)?.clone())
}

/// Inference-mode projection of an `N x D` matrix back to `N x C`.
pub fn project(h: &RealTensor, params: &ParameterSet) -> Result<RealTensor> {
    let d = params.project.layers[0].fan_in();
    if h.shape().len() != 2 || h.cols() != d {
        return Err(Error::shape("project", format!("input {:?} for dim {}", h.shape(), d)));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let input = tape.constant(h.clone());
    let out = apply_mlp(&mut tape, input, &vars.project)?;
    Ok(tape.real(out)?.clone())
}

fn fdblock(m: &RealTensor, layer: usize, params: &ParameterSet, mode: ExecMode) -> Result<RealTensor> {
    if layer >= params.bank.layers.len() {
        return Err(Error::OutOfRange {
            what: "frequency blocks",
            index: layer,
            len: params.bank.layers.len(),
        });
    }
    let d = params.bank.layers[layer].shape()[1];
    let bins = params.bank.layers[layer].shape()[0];
    if m.shape().len() != 2 || m.cols() != d || m.rows() / 2 + 1 != bins {
        return Err(Error::shape(
            "fdblock",
            format!("input {:?} for {} bins of dim {}", m.shape(), bins, d),
        ));
    }
    if m.rows() % 2 != 0 {
        return Err(Error::UnsupportedLength(m.rows()));
    }
    let mut tape = Tape::new();
    let bank = tape.constant_complex(params.bank.layers[layer].clone());
    let w = tape.constant(params.fusion.layers[layer].clone());
    let input = tape.constant(m.clone());
    let out = fdblock_on_tape(&mut tape, input, bank, w, mode)?;
    Ok(tape.real(out)?.clone())
}

/// Literal per-frequency evaluation of block `layer` (inference mode).
pub fn fdblock_forward_naive(m: &RealTensor, layer: usize, params: &ParameterSet) -> Result<RealTensor> {
    fdblock(m, layer, params, ExecMode::Naive)
}

/// Single-inverse evaluation of block `layer` (inference mode).
pub fn fdblock_forward_fast(m: &RealTensor, layer: usize, params: &ParameterSet) -> Result<RealTensor> {
    fdblock(m, layer, params, ExecMode::Fast)
}

/// Final-block decomposition of one forecast.
#[derive(Debug, Clone)]
pub struct FrequencyComponents {
    /// `W_m * Z^{L,m}` for every bin, each `(T + S) x D`.
    pub weighted: Vec<RealTensor>,
}

/// Runs every block except the last normally, then splits the last block's
/// output into its per-bin weighted contributions (inference mode).
pub fn frequency_components(
    x: &RealTensor,
    params: &ParameterSet,
    cfg: &ModelConfig,
    mode: ExecMode,
) -> Result<FrequencyComponents> {
    params.check(cfg)?;
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let padded = zero_pad(x, cfg)?;
    let input = tape.constant(padded);
    let mut h = embed_on_tape(&mut tape, input, &vars)?;
    let last = cfg.layers - 1;
    for l in 0..last {
        h = fdblock_on_tape(&mut tape, h, vars.bank[l], vars.fusion[l], mode)?;
    }
    let spec = tape.rdft(h)?;
    let out = tape.bin_transfer(spec, vars.bank[last])?;
    let transferred = Spectrum::new(tape.complex(out)?.clone(), cfg.padded_len())?;
    let w = params.fusion.layers[last].data();
    let weighted = (0..cfg.bins())
        .map(|m| Ok(spectral::single_bin_inverse(&transferred, m)?.scale(w[m])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyComponents { weighted })
}
