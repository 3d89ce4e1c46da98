use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Adjoints, ComplexTensor, Gradients, Parameters, RealTensor, Tape, Var};

/// Shape of a forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Lookback length `T`.
    pub lookback: usize,
    /// Prediction length `S`.
    pub horizon: usize,
    /// Variable count `C`.
    pub channels: usize,
    /// Embedding dimension `D`.
    pub dim: usize,
    /// Number of frequency blocks `L`.
    pub layers: usize,
    pub dropout: f64,
    /// Width of an optional tanh hidden layer inside the embedding and projection maps.
    pub hidden: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            channels: 7,
            dim: 64,
            layers: 1,
            dropout: 0.0,
            hidden: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.lookback == 0 || self.horizon == 0 {
            return fail("lookback and horizon must be positive".into());
        }
        if (self.lookback + self.horizon) % 2 != 0 {
            return fail(format!(
                "lookback + horizon must be even, got {} + {}",
                self.lookback, self.horizon
            ));
        }
        if self.channels == 0 || self.dim == 0 || self.layers == 0 {
            return fail("channels, dim and layers must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.hidden == Some(0) {
            return fail("hidden width must be positive".into());
        }
        Ok(())
    }

    /// Zero-padded sequence length `T + S`.
    pub fn padded_len(&self) -> usize {
        self.lookback + self.horizon
    }

    /// Bin count `K = (T + S) / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.padded_len() / 2 + 1
    }
}

/// `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: RealTensor,
    pub bias: RealTensor,
}

impl Affine {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<_>>();
        let weight = RealTensor::from_parts(vec![fan_in, fan_out], draw(fan_in * fan_out));
        let bias = RealTensor::from_parts(vec![fan_out], draw(fan_out));
        Self { weight, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    /// Identity map on `n` features.
    pub fn identity(n: usize) -> Self {
        Self {
            weight: RealTensor::eye(n),
            bias: RealTensor::zeros(&[n]),
        }
    }
}

/// Affine layers joined by `tanh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Affine>,
}

impl Mlp {
    fn init(input: usize, output: usize, hidden: Option<usize>, rng: &mut ChaCha8Rng) -> Self {
        let layers = match hidden {
            None => vec![Affine::init(input, output, rng)],
            Some(h) => vec![Affine::init(input, h, rng), Affine::init(h, output, rng)],
        };
        Self { layers }
    }

    pub fn is_affine(&self) -> bool {
        self.layers.len() == 1
    }
}

/// Complex `D x D` transfer matrices, one `[K, D, D]` tensor per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBank {
    pub layers: Vec<ComplexTensor>,
}

impl TransferBank {
    pub fn identity(layers: usize, bins: usize, dim: usize) -> Self {
        let mut re = RealTensor::zeros(&[bins, dim, dim]);
        for k in 0..bins {
            for i in 0..dim {
                re.data_mut()[k * dim * dim + i * dim + i] = 1.0;
            }
        }
        let one = ComplexTensor::from_real(re);
        Self {
            layers: vec![one; layers],
        }
    }

    /// `H^{l,m}` as a standalone `D x D` complex matrix.
    pub fn matrix(&self, layer: usize, bin: usize) -> ComplexTensor {
        let t = &self.layers[layer];
        let d = t.shape()[1];
        let dd = d * d;
        let slice = |x: &RealTensor| {
            RealTensor::from_parts(vec![d, d], x.data()[bin * dd..(bin + 1) * dd].to_vec())
        };
        ComplexTensor {
            re: slice(&t.re),
            im: slice(&t.im),
        }
    }
}

/// Per-block fusion weights `W`, each of length `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub layers: Vec<RealTensor>,
}

impl FusionWeights {
    pub fn ones(layers: usize, bins: usize) -> Self {
        Self {
            layers: vec![RealTensor::filled(&[bins], 1.0); layers],
        }
    }
}

/// Which part of the model a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    Embed,
    TransferRe,
    TransferIm,
    Fusion,
    Project,
}

impl ParamClass {
    pub const ALL: [ParamClass; 5] = [
        ParamClass::Embed,
        ParamClass::TransferRe,
        ParamClass::TransferIm,
        ParamClass::Fusion,
        ParamClass::Project,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamClass::Embed => "embed_f",
            ParamClass::TransferRe => "bank_re",
            ParamClass::TransferIm => "bank_im",
            ParamClass::Fusion => "fusion",
            ParamClass::Project => "project_g",
        }
    }
}

/// All trainable tensors of a forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub embed: Mlp,
    pub bank: TransferBank,
    pub fusion: FusionWeights,
    pub project: Mlp,
}

/// Seeded initialization: affine entries uniform in `+-1/sqrt(fan_in)`,
/// transfer entries (both parts) uniform in `+-1/sqrt(D)`, fusion weights one.
pub fn init_parameters(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, d, k) = (cfg.channels, cfg.dim, cfg.bins());
    let embed = Mlp::init(c, d, cfg.hidden, &mut rng);
    let bound = 1.0 / (d as f64).sqrt();
    let bank = TransferBank {
        layers: (0..cfg.layers)
            .map(|_| {
                let n = k * d * d;
                let mut draw = || {
                    RealTensor::from_parts(
                        vec![k, d, d],
                        (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
                    )
                };
                let re = draw();
                let im = draw();
                ComplexTensor { re, im }
            })
            .collect(),
    };
    let fusion = FusionWeights::ones(cfg.layers, k);
    let project = Mlp::init(d, c, cfg.hidden, &mut rng);
    Ok(ParameterSet {
        embed,
        bank,
        fusion,
        project,
    })
}

impl ParameterSet {
    /// Checks that tensor shapes agree with `cfg`.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        cfg.validate()?;
        let (c, d, k, l) = (cfg.channels, cfg.dim, cfg.bins(), cfg.layers);
        let bad = |what: String| Err(Error::Config(format!("parameters do not match config: {what}")));
        let mlp_ok = |m: &Mlp, i: usize, o: usize| {
            let first = m.layers.first();
            let last = m.layers.last();
            first.map(Affine::fan_in) == Some(i)
                && last.map(Affine::fan_out) == Some(o)
                && m.layers.len() == if cfg.hidden.is_some() { 2 } else { 1 }
        };
        if !mlp_ok(&self.embed, c, d) {
            return bad("embedding".into());
        }
        if !mlp_ok(&self.project, d, c) {
            return bad("projection".into());
        }
        if self.bank.layers.len() != l || self.bank.layers.iter().any(|t| t.shape() != [k, d, d]) {
            return bad(format!("transfer bank must be {l} x [{k}, {d}, {d}]"));
        }
        if self.fusion.layers.len() != l || self.fusion.layers.iter().any(|w| w.len() != k) {
            return bad(format!("fusion weights must be {l} x [{k}]"));
        }
        Ok(())
    }

    /// Named tensors in canonical order, with their class.
    pub fn tensor_names(&self) -> Vec<(String, ParamClass)> {
        let mut out = Vec::new();
        for (i, _) in self.embed.layers.iter().enumerate() {
            out.push((format!("embed.{i}.weight"), ParamClass::Embed));
            out.push((format!("embed.{i}.bias"), ParamClass::Embed));
        }
        for l in 0..self.bank.layers.len() {
            out.push((format!("bank.{l}.re"), ParamClass::TransferRe));
            out.push((format!("bank.{l}.im"), ParamClass::TransferIm));
        }
        for l in 0..self.fusion.layers.len() {
            out.push((format!("fusion.{l}"), ParamClass::Fusion));
        }
        for (i, _) in self.project.layers.iter().enumerate() {
            out.push((format!("project.{i}.weight"), ParamClass::Project));
            out.push((format!("project.{i}.bias"), ParamClass::Project));
        }
        out
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&RealTensor> {
        let mut out = Vec::new();
        for a in &self.embed.layers {
            out.push(&a.weight);
            out.push(&a.bias);
        }
        for c in &self.bank.layers {
            out.push(&c.re);
            out.push(&c.im);
        }
        out.extend(self.fusion.layers.iter());
        for a in &self.project.layers {
            out.push(&a.weight);
            out.push(&a.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut RealTensor> {
        let mut out = Vec::new();
        for a in &mut self.embed.layers {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        for c in &mut self.bank.layers {
            out.push(&mut c.re);
            out.push(&mut c.im);
        }
        out.extend(self.fusion.layers.iter_mut());
        for a in &mut self.project.layers {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Registers every tensor as a tape leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let mlp = |tape: &mut Tape, m: &Mlp| {
            m.layers
                .iter()
                .map(|a| (tape.param_real(a.weight.clone()), tape.param_real(a.bias.clone())))
                .collect::<Vec<_>>()
        };
        let embed = mlp(tape, &self.embed);
        let bank = self.bank.layers.iter().map(|c| tape.param_complex(c.clone())).collect();
        let fusion = self.fusion.layers.iter().map(|w| tape.param_real(w.clone())).collect();
        let project = mlp(tape, &self.project);
        ParamVars {
            embed,
            bank,
            fusion,
            project,
        }
    }
}

impl Parameters for ParameterSet {
    fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(RealTensor::data).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut().into_iter().map(RealTensor::data_mut).collect()
    }
}

/// Tape handles for a registered [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub embed: Vec<(Var, Var)>,
    pub bank: Vec<Var>,
    pub fusion: Vec<Var>,
    pub project: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Collects adjoints in the canonical tensor order.
    pub fn gradients(&self, adj: &Adjoints) -> Gradients {
        let mut out = Vec::new();
        for (w, b) in &self.embed {
            out.push(adj.real(*w).into_data());
            out.push(adj.real(*b).into_data());
        }
        for v in &self.bank {
            let c = adj.complex(*v);
            out.push(c.re.into_data());
            out.push(c.im.into_data());
        }
        for v in &self.fusion {
            out.push(adj.real(*v).into_data());
        }
        for (w, b) in &self.project {
            out.push(adj.real(*w).into_data());
            out.push(adj.real(*b).into_data());
        }
        Gradients(out)
    }
}
