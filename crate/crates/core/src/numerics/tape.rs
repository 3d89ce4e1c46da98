//! Dynamic reverse-mode tape over a fixed set of tensor primitives.
//!
//! Every primitive records its inputs when it is applied; [`Tape::backward`]
//! walks the record in reverse and accumulates adjoints. Complex nodes carry
//! their adjoint as an independent `(re, im)` pair of real tensors, which is
//! all a real-valued loss needs.

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul, vecmat_into, ComplexTensor, RealTensor};
use crate::spectral;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl Value {
    fn zeros_like(&self) -> Value {
        match self {
            Value::Real(t) => Value::Real(RealTensor::zeros(t.shape())),
            Value::Complex(c) => Value::Complex(ComplexTensor::zeros(c.shape())),
        }
    }

    fn add_assign(&mut self, other: &Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.add_assign(b),
            (Value::Complex(a), Value::Complex(b)) => a.add_assign(b),
            _ => unreachable!("adjoint kind always matches its node"),
        }
    }

    fn into_real(self) -> RealTensor {
        match self {
            Value::Real(t) => t,
            Value::Complex(_) => unreachable!("expected a real adjoint"),
        }
    }

    fn into_complex(self) -> ComplexTensor {
        match self {
            Value::Complex(c) => c,
            Value::Real(_) => unreachable!("expected a complex adjoint"),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskMul(Var, Vec<f64>),
    Tanh(Var),
    Rdft(Var),
    Irdft(Var),
    BinTransfer(Var, Var),
    BinScale(Var, Var),
    KeepBin(Var, usize),
    WeightedSum(Vec<Var>, Var),
    SliceRows(Var, usize),
    Sum(Var),
    Mse(Var, RealTensor),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward pass.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Value>>,
    shapes: Vec<Value>,
}

impl Adjoints {
    /// Adjoint of a real node; zeros if the loss does not depend on it.
    pub fn real(&self, v: Var) -> RealTensor {
        match &self.grads[v.0] {
            Some(Value::Real(t)) => t.clone(),
            _ => match self.shapes[v.0].zeros_like() {
                Value::Real(t) => t,
                Value::Complex(_) => panic!("node {} is complex", v.0),
            },
        }
    }

    /// Adjoint of a complex node as `(d/d re, d/d im)`.
    pub fn complex(&self, v: Var) -> ComplexTensor {
        match &self.grads[v.0] {
            Some(Value::Complex(c)) => c.clone(),
            _ => match self.shapes[v.0].zeros_like() {
                Value::Complex(c) => c,
                Value::Real(_) => panic!("node {} is real", v.0),
            },
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Leaf whose adjoint is tracked.
    pub fn param(&mut self, value: Value) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param_real(&mut self, t: RealTensor) -> Var {
        self.param(Value::Real(t))
    }

    pub fn param_complex(&mut self, c: ComplexTensor) -> Var {
        self.param(Value::Complex(c))
    }

    /// Leaf treated as a constant input.
    pub fn constant(&mut self, t: RealTensor) -> Var {
        self.push(Value::Real(t), Op::Leaf, false)
    }

    pub fn constant_complex(&mut self, c: ComplexTensor) -> Var {
        self.push(Value::Complex(c), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> Result<&RealTensor> {
        match &self.nodes[v.0].value {
            Value::Real(t) => Ok(t),
            Value::Complex(_) => Err(Error::Contract(format!("node {} is complex", v.0))),
        }
    }

    pub fn complex(&self, v: Var) -> Result<&ComplexTensor> {
        match &self.nodes[v.0].value {
            Value::Complex(c) => Ok(c),
            Value::Real(_) => Err(Error::Contract(format!("node {} is real", v.0))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(self.real(a)?, self.real(b)?)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Value::Real(out), Op::MatMul(a, b), ng))
    }

    /// Adds a length-`D` bias to every row of an `N x D` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.real(a)?, self.real(bias)?);
        let d = x.cols();
        if b.len() != d {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", x.shape(), b.shape())));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let ng = self.needs(&[a, bias]);
        Ok(self.push(Value::Real(out), Op::AddRow(a, bias), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.real(a)?.add(self.real(b)?)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Value::Real(out), Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.real(a)?.mul(self.real(b)?)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Value::Real(out), Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.real(a)?.scale(k);
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::Scale(a, k), ng))
    }

    /// Elementwise product with a fixed mask (dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let x = self.real(a)?;
        if mask.len() != x.len() {
            return Err(Error::shape("mask_mul", format!("{} vs {}", mask.len(), x.len())));
        }
        let out = RealTensor::from_parts(
            x.shape().to_vec(),
            x.data().iter().zip(&mask).map(|(a, m)| a * m).collect(),
        );
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::MaskMul(a, mask), ng))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.real(a)?.map(f64::tanh);
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::Tanh(a), ng))
    }

    /// Real-input DFT along rows: `n x F` real to `K x F` complex.
    pub fn rdft(&mut self, a: Var) -> Result<Var> {
        let x = self.real(a)?;
        let n = x.rows();
        if n < 2 || n % 2 != 0 {
            return Err(Error::UnsupportedLength(n));
        }
        let out = spectral::rdft_columns(x);
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Complex(out), Op::Rdft(a), ng))
    }

    /// Inverse DFT with real-part projection: `K x F` complex to `n x F` real,
    /// where `n = 2 (K - 1)`.
    pub fn irdft(&mut self, a: Var) -> Result<Var> {
        let c = self.complex(a)?;
        if c.shape().len() != 2 || c.shape()[0] < 2 {
            return Err(Error::shape("irdft", format!("{:?}", c.shape())));
        }
        let n = 2 * (c.shape()[0] - 1);
        let out = spectral::irdft_columns(c, n);
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::Irdft(a), ng))
    }

    /// Right-multiplies the `D`-vector of each bin `k` by `bank[k]` (`D x D`).
    pub fn bin_transfer(&mut self, spec: Var, bank: Var) -> Result<Var> {
        let (s, h) = (self.complex(spec)?, self.complex(bank)?);
        let (k_bins, d) = (s.shape()[0], s.shape()[1]);
        if h.shape() != [k_bins, d, d] {
            return Err(Error::shape(
                "bin_transfer",
                format!("spectrum {:?} with bank {:?}", s.shape(), h.shape()),
            ));
        }
        let mut re = vec![0.0; k_bins * d];
        let mut im = vec![0.0; k_bins * d];
        let dd = d * d;
        for k in 0..k_bins {
            let (ore, oim) = (&mut re[k * d..(k + 1) * d], &mut im[k * d..(k + 1) * d]);
            vecmat_into(
                s.re.row(k),
                s.im.row(k),
                &h.re.data()[k * dd..(k + 1) * dd],
                &h.im.data()[k * dd..(k + 1) * dd],
                ore,
                oim,
            );
        }
        let out = ComplexTensor {
            re: RealTensor::from_parts(vec![k_bins, d], re),
            im: RealTensor::from_parts(vec![k_bins, d], im),
        };
        let ng = self.needs(&[spec, bank]);
        Ok(self.push(Value::Complex(out), Op::BinTransfer(spec, bank), ng))
    }

    /// Scales row `k` of a `K x D` complex tensor by real `w[k]`.
    pub fn bin_scale(&mut self, spec: Var, w: Var) -> Result<Var> {
        let (s, wt) = (self.complex(spec)?, self.real(w)?);
        let (k_bins, d) = (s.shape()[0], s.shape()[1]);
        if wt.len() != k_bins {
            return Err(Error::shape("bin_scale", format!("{:?} by {:?}", s.shape(), wt.shape())));
        }
        let mut out = s.clone();
        for k in 0..k_bins {
            let wk = wt.data()[k];
            for x in &mut out.re.data_mut()[k * d..(k + 1) * d] {
                *x *= wk;
            }
            for x in &mut out.im.data_mut()[k * d..(k + 1) * d] {
                *x *= wk;
            }
        }
        let ng = self.needs(&[spec, w]);
        Ok(self.push(Value::Complex(out), Op::BinScale(spec, w), ng))
    }

    /// Copy of a `K x D` complex tensor with every row except `m` zeroed.
    pub fn keep_bin(&mut self, spec: Var, m: usize) -> Result<Var> {
        let s = self.complex(spec)?;
        let (k_bins, d) = (s.shape()[0], s.shape()[1]);
        if m >= k_bins {
            return Err(Error::OutOfRange {
                what: "spectrum bins",
                index: m,
                len: k_bins,
            });
        }
        let mut out = ComplexTensor::zeros(s.shape());
        out.re.data_mut()[m * d..(m + 1) * d].copy_from_slice(s.re.row(m));
        out.im.data_mut()[m * d..(m + 1) * d].copy_from_slice(s.im.row(m));
        let ng = self.needs(&[spec]);
        Ok(self.push(Value::Complex(out), Op::KeepBin(spec, m), ng))
    }

    /// `sum_m w[m] * parts[m]` over equally shaped real tensors.
    pub fn weighted_sum(&mut self, parts: Vec<Var>, w: Var) -> Result<Var> {
        let wt = self.real(w)?;
        if wt.len() != parts.len() || parts.is_empty() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} parts with {} weights", parts.len(), wt.len()),
            ));
        }
        let shape = self.real(parts[0])?.shape().to_vec();
        let mut out = RealTensor::zeros(&shape);
        for (p, &wm) in parts.iter().zip(wt.data()) {
            let t = self.real(*p)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("weighted_sum", format!("{:?} vs {:?}", t.shape(), shape)));
            }
            for (o, v) in out.data_mut().iter_mut().zip(t.data()) {
                *o += wm * v;
            }
        }
        let mut deps = parts.clone();
        deps.push(w);
        let ng = self.needs(&deps);
        Ok(self.push(Value::Real(out), Op::WeightedSum(parts, w), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.real(a)?.slice_rows(start, end)?;
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::SliceRows(a, start), ng))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = RealTensor::scalar(self.real(a)?.sum());
        let ng = self.needs(&[a]);
        Ok(self.push(Value::Real(out), Op::Sum(a), ng))
    }

    /// Mean squared difference against a fixed target.
    pub fn mse(&mut self, pred: Var, target: &RealTensor) -> Result<Var> {
        let p = self.real(pred)?;
        if p.shape() != target.shape() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", p.shape(), target.shape())));
        }
        let n = p.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let ng = self.needs(&[pred]);
        Ok(self.push(Value::Real(RealTensor::scalar(loss)), Op::Mse(pred, target.clone()), ng))
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        let lt = self.real(loss)?;
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Value::Real(RealTensor::from_parts(lt.shape().to_vec(), vec![1.0])));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Adjoints {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.zeros_like()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Value>], v: Var, g: Value) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &Value, grads: &mut [Option<Value>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let g = real_ref(g);
                let (av, bv) = (self.real_unchecked(*a), self.real_unchecked(*b));
                if self.wants(*a) {
                    let ga = matmul(g, &bv.transpose()).expect("shapes checked on forward");
                    self.accumulate(grads, *a, Value::Real(ga));
                }
                if self.wants(*b) {
                    let gb = matmul(&av.transpose(), g).expect("shapes checked on forward");
                    self.accumulate(grads, *b, Value::Real(gb));
                }
            }
            Op::AddRow(a, bias) => {
                let g = real_ref(g);
                if self.wants(*a) {
                    self.accumulate(grads, *a, Value::Real(g.clone()));
                }
                if self.wants(*bias) {
                    let bshape = self.real_unchecked(*bias).shape().to_vec();
                    let d = g.cols();
                    let mut gb = vec![0.0; d];
                    for row in g.data().chunks(d) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, Value::Real(RealTensor::from_parts(bshape, gb)));
                }
            }
            Op::Add(a, b) => {
                let g = real_ref(g);
                self.accumulate(grads, *a, Value::Real(g.clone()));
                self.accumulate(grads, *b, Value::Real(g.clone()));
            }
            Op::Mul(a, b) => {
                let g = real_ref(g);
                let (av, bv) = (self.real_unchecked(*a), self.real_unchecked(*b));
                if self.wants(*a) {
                    self.accumulate(grads, *a, Value::Real(g.mul(bv).expect("same shape")));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, Value::Real(g.mul(av).expect("same shape")));
                }
            }
            Op::Scale(a, k) => {
                self.accumulate(grads, *a, Value::Real(real_ref(g).scale(*k)));
            }
            Op::MaskMul(a, mask) => {
                let g = real_ref(g);
                let out = RealTensor::from_parts(
                    g.shape().to_vec(),
                    g.data().iter().zip(mask).map(|(a, m)| a * m).collect(),
                );
                self.accumulate(grads, *a, Value::Real(out));
            }
            Op::Tanh(a) => {
                let g = real_ref(g);
                let y = real_ref(&node.value);
                let out = RealTensor::from_parts(
                    g.shape().to_vec(),
                    g.data().iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect(),
                );
                self.accumulate(grads, *a, Value::Real(out));
            }
            Op::Rdft(a) => {
                // dx[t] = Re sum_k g_k e^{+j 2 pi k t / n}, i.e. n * irdft with middle bins halved
                let g = complex_ref(g);
                let (k_bins, f) = (g.shape()[0], g.shape()[1]);
                let n = 2 * (k_bins - 1);
                let mut h = g.clone();
                for k in 1..k_bins - 1 {
                    for j in 0..f {
                        h.re.set(k, j, 0.5 * g.re.get(k, j));
                        h.im.set(k, j, 0.5 * g.im.get(k, j));
                    }
                }
                let gx = spectral::irdft_columns(&h, n).scale(n as f64);
                self.accumulate(grads, *a, Value::Real(gx));
            }
            Op::Irdft(a) => {
                // dc[k] = (alpha_k / n) * rdft(g)[k], alpha = 1 at the edges and 2 inside
                let g = real_ref(g);
                let n = g.rows();
                let mut c = spectral::rdft_columns(g);
                let (k_bins, f) = (c.shape()[0], c.shape()[1]);
                for k in 0..k_bins {
                    let alpha = if k == 0 || k == k_bins - 1 { 1.0 } else { 2.0 } / n as f64;
                    for j in 0..f {
                        c.re.set(k, j, alpha * c.re.get(k, j));
                        c.im.set(k, j, alpha * c.im.get(k, j));
                    }
                }
                self.accumulate(grads, *a, Value::Complex(c));
            }
            Op::BinTransfer(spec, bank) => {
                let g = complex_ref(g);
                let s = self.complex_unchecked(*spec);
                let h = self.complex_unchecked(*bank);
                let (k_bins, d) = (s.shape()[0], s.shape()[1]);
                let dd = d * d;
                if self.wants(*spec) {
                    let mut gs = ComplexTensor::zeros(s.shape());
                    for k in 0..k_bins {
                        let (gre, gim) = (g.re.row(k), g.im.row(k));
                        let hre = &h.re.data()[k * dd..(k + 1) * dd];
                        let him = &h.im.data()[k * dd..(k + 1) * dd];
                        for i in 0..d {
                            let (mut r, mut m) = (0.0, 0.0);
                            for j in 0..d {
                                r += gre[j] * hre[i * d + j] + gim[j] * him[i * d + j];
                                m += -gre[j] * him[i * d + j] + gim[j] * hre[i * d + j];
                            }
                            gs.re.data_mut()[k * d + i] = r;
                            gs.im.data_mut()[k * d + i] = m;
                        }
                    }
                    self.accumulate(grads, *spec, Value::Complex(gs));
                }
                if self.wants(*bank) {
                    let mut gh = ComplexTensor::zeros(h.shape());
                    for k in 0..k_bins {
                        let (gre, gim) = (g.re.row(k), g.im.row(k));
                        let (vre, vim) = (s.re.row(k), s.im.row(k));
                        let ghre = &mut gh.re.data_mut()[k * dd..(k + 1) * dd];
                        for i in 0..d {
                            for j in 0..d {
                                ghre[i * d + j] = gre[j] * vre[i] + gim[j] * vim[i];
                            }
                        }
                        let ghim = &mut gh.im.data_mut()[k * dd..(k + 1) * dd];
                        for i in 0..d {
                            for j in 0..d {
                                ghim[i * d + j] = -gre[j] * vim[i] + gim[j] * vre[i];
                            }
                        }
                    }
                    self.accumulate(grads, *bank, Value::Complex(gh));
                }
            }
            Op::BinScale(spec, w) => {
                let g = complex_ref(g);
                let s = self.complex_unchecked(*spec);
                let wt = self.real_unchecked(*w);
                let (k_bins, d) = (s.shape()[0], s.shape()[1]);
                if self.wants(*spec) {
                    let mut gs = g.clone();
                    for k in 0..k_bins {
                        let wk = wt.data()[k];
                        gs.re.data_mut()[k * d..(k + 1) * d].iter_mut().for_each(|x| *x *= wk);
                        gs.im.data_mut()[k * d..(k + 1) * d].iter_mut().for_each(|x| *x *= wk);
                    }
                    self.accumulate(grads, *spec, Value::Complex(gs));
                }
                if self.wants(*w) {
                    let gw: Vec<f64> = (0..k_bins)
                        .map(|k| {
                            let re: f64 = g.re.row(k).iter().zip(s.re.row(k)).map(|(a, b)| a * b).sum();
                            let im: f64 = g.im.row(k).iter().zip(s.im.row(k)).map(|(a, b)| a * b).sum();
                            re + im
                        })
                        .collect();
                    let shape = wt.shape().to_vec();
                    self.accumulate(grads, *w, Value::Real(RealTensor::from_parts(shape, gw)));
                }
            }
            Op::KeepBin(spec, m) => {
                let g = complex_ref(g);
                let d = g.shape()[1];
                let mut out = ComplexTensor::zeros(g.shape());
                out.re.data_mut()[m * d..(m + 1) * d].copy_from_slice(g.re.row(*m));
                out.im.data_mut()[m * d..(m + 1) * d].copy_from_slice(g.im.row(*m));
                self.accumulate(grads, *spec, Value::Complex(out));
            }
            Op::WeightedSum(parts, w) => {
                let g = real_ref(g);
                let wt = self.real_unchecked(*w);
                for (p, &wm) in parts.iter().zip(wt.data()) {
                    if self.wants(*p) {
                        self.accumulate(grads, *p, Value::Real(g.scale(wm)));
                    }
                }
                if self.wants(*w) {
                    let gw: Vec<f64> = parts
                        .iter()
                        .map(|p| {
                            self.real_unchecked(*p)
                                .data()
                                .iter()
                                .zip(g.data())
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    let shape = wt.shape().to_vec();
                    self.accumulate(grads, *w, Value::Real(RealTensor::from_parts(shape, gw)));
                }
            }
            Op::SliceRows(a, start) => {
                let g = real_ref(g);
                let src = self.real_unchecked(*a);
                let c = src.cols();
                let mut out = RealTensor::zeros(src.shape());
                out.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, Value::Real(out));
            }
            Op::Sum(a) => {
                let gv = real_ref(g).data()[0];
                let shape = self.real_unchecked(*a).shape().to_vec();
                self.accumulate(grads, *a, Value::Real(RealTensor::filled(&shape, gv)));
            }
            Op::Mse(pred, target) => {
                let gv = real_ref(g).data()[0];
                let p = self.real_unchecked(*pred);
                let k = 2.0 * gv / p.len().max(1) as f64;
                let out = RealTensor::from_parts(
                    p.shape().to_vec(),
                    p.data().iter().zip(target.data()).map(|(a, b)| k * (a - b)).collect(),
                );
                self.accumulate(grads, *pred, Value::Real(out));
            }
        }
    }

    fn real_unchecked(&self, v: Var) -> &RealTensor {
        real_ref(&self.nodes[v.0].value)
    }

    fn complex_unchecked(&self, v: Var) -> &ComplexTensor {
        complex_ref(&self.nodes[v.0].value)
    }
}

fn real_ref(v: &Value) -> &RealTensor {
    match v {
        Value::Real(t) => t,
        Value::Complex(_) => unreachable!("expected a real value"),
    }
}

fn complex_ref(v: &Value) -> &ComplexTensor {
    match v {
        Value::Complex(c) => c,
        Value::Real(_) => unreachable!("expected a complex value"),
    }
}

impl From<Value> for RealTensor {
    fn from(v: Value) -> Self {
        v.into_real()
    }
}

impl From<Value> for ComplexTensor {
    fn from(v: Value) -> Self {
        v.into_complex()
    }
}
