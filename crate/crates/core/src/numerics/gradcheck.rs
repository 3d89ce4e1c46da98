use crate::error::{Error, Result};

/// Flat access to a collection of trainable tensors, in a fixed order.
pub trait Parameters: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameters for Vec<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// One gradient vector per parameter tensor, aligned with [`Parameters::slices`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like<P: Parameters>(p: &P) -> Self {
        Gradients(p.slices().iter().map(|s| vec![0.0; s.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= k);
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

/// Magnitude below which gradient entries are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn finite_difference_grad<P, F>(f: F, theta: &P, h: f64) -> Result<Gradients>
where
    P: Parameters,
    F: Fn(&P) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let eval = |p: &P| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("objective returned {v}")))
        }
    };
    let mut work = theta.clone();
    let sizes: Vec<usize> = theta.slices().iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (t, &len) in sizes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.slices()[t][i];
            work.slices_mut()[t][i] = orig + h;
            let plus = eval(&work)?;
            work.slices_mut()[t][i] = orig - h;
            let minus = eval(&work)?;
            work.slices_mut()[t][i] = orig;
            *gi = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(Gradients(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ComplexTensor, RealTensor, Tape, Var};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_and_constant() {
        let g = finite_difference_grad(|p: &Vec<f64>| Ok(p[0] * p[0]), &vec![3.0], 1e-6).unwrap();
        assert!((g.0[0][0] - 6.0).abs() < 1e-6);
        let g = finite_difference_grad(|_: &Vec<f64>| Ok(4.2), &vec![3.0, -1.0], 1e-6).unwrap();
        assert!(g.0[0].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        assert!(finite_difference_grad(|p: &Vec<f64>| Ok(p[0]), &vec![1.0], 0.0).is_err());
        let r = finite_difference_grad(|p: &Vec<f64>| Ok(p[0].ln()), &vec![0.0], 1e-3);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn tape_square_and_unused_leaf() {
        let mut tape = Tape::new();
        let theta = tape.param_real(RealTensor::scalar(3.0));
        let unused = tape.param_real(RealTensor::scalar(1.5));
        let sq = tape.mul(theta, theta).unwrap();
        let loss = tape.sum(sq).unwrap();
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.real(theta).data(), &[6.0]);
        assert_eq!(adj.real(unused).data(), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.param_real(RealTensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    /// A flat list of real inputs fed to one primitive under test.
    #[derive(Clone)]
    struct Inputs(Vec<Vec<f64>>);

    impl Parameters for Inputs {
        fn slices(&self) -> Vec<&[f64]> {
            self.0.iter().map(Vec::as_slice).collect()
        }
        fn slices_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.iter_mut().map(Vec::as_mut_slice).collect()
        }
    }

    type Builder = fn(&mut Tape, &[Var]) -> Var;

    struct Case {
        name: &'static str,
        /// (shape, is_complex) per input
        inputs: Vec<(Vec<usize>, bool)>,
        build: Builder,
    }

    fn cases() -> Vec<Case> {
        vec![
            Case { name: "matmul", inputs: vec![(vec![3, 4], false), (vec![4, 2], false)], build: |t, v| t.matmul(v[0], v[1]).unwrap() },
            Case { name: "add_row", inputs: vec![(vec![3, 4], false), (vec![4], false)], build: |t, v| t.add_row(v[0], v[1]).unwrap() },
            Case { name: "add", inputs: vec![(vec![3, 2], false), (vec![3, 2], false)], build: |t, v| t.add(v[0], v[1]).unwrap() },
            Case { name: "mul", inputs: vec![(vec![3, 2], false), (vec![3, 2], false)], build: |t, v| t.mul(v[0], v[1]).unwrap() },
            Case { name: "scale", inputs: vec![(vec![4, 2], false)], build: |t, v| t.scale(v[0], -1.7).unwrap() },
            Case { name: "mask_mul", inputs: vec![(vec![2, 3], false)], build: |t, v| t.mask_mul(v[0], vec![0.0, 2.0, 1.0, 0.5, 0.0, 3.0]).unwrap() },
            Case { name: "tanh", inputs: vec![(vec![4, 3], false)], build: |t, v| t.tanh(v[0]).unwrap() },
            Case { name: "rdft", inputs: vec![(vec![10, 3], false)], build: |t, v| { let c = t.rdft(v[0]).unwrap(); t.irdft(c).unwrap() } },
            Case { name: "rdft_direct", inputs: vec![(vec![8, 2], false), (vec![5, 2, 2], true)], build: |t, v| {
                // rdft output reaches the loss through a transfer rather than an inverse
                let c = t.rdft(v[0]).unwrap();
                let o = t.bin_transfer(c, v[1]).unwrap();
                t.irdft(o).unwrap()
            } },
            Case { name: "irdft", inputs: vec![(vec![7, 3], true)], build: |t, v| t.irdft(v[0]).unwrap() },
            Case { name: "bin_transfer", inputs: vec![(vec![5, 3], true), (vec![5, 3, 3], true)], build: |t, v| { let o = t.bin_transfer(v[0], v[1]).unwrap(); t.irdft(o).unwrap() } },
            Case { name: "bin_scale", inputs: vec![(vec![5, 2], true), (vec![5], false)], build: |t, v| { let o = t.bin_scale(v[0], v[1]).unwrap(); t.irdft(o).unwrap() } },
            Case { name: "keep_bin", inputs: vec![(vec![5, 2], true)], build: |t, v| { let o = t.keep_bin(v[0], 2).unwrap(); t.irdft(o).unwrap() } },
            Case { name: "weighted_sum", inputs: vec![(vec![3, 2], false), (vec![3, 2], false), (vec![2], false)], build: |t, v| t.weighted_sum(vec![v[0], v[1]], v[2]).unwrap() },
            Case { name: "slice_rows", inputs: vec![(vec![6, 2], false)], build: |t, v| t.slice_rows(v[0], 2, 5).unwrap() },
            Case { name: "sum", inputs: vec![(vec![3, 3], false)], build: |t, v| { let s = t.sum(v[0]).unwrap(); t.mul(s, s).unwrap() } },
        ]
    }

    /// Projects the primitive's output onto a fixed random direction.
    fn run(case: &Case, inputs: &Inputs, probe_seed: u64) -> (f64, Vec<Var>, Tape) {
        let mut tape = Tape::new();
        let mut vars = Vec::new();
        let mut slot = 0;
        for (shape, complex) in &case.inputs {
            if *complex {
                let re = RealTensor::new(shape.clone(), inputs.0[slot].clone()).unwrap();
                let im = RealTensor::new(shape.clone(), inputs.0[slot + 1].clone()).unwrap();
                vars.push(tape.param_complex(ComplexTensor::new(re, im).unwrap()));
                slot += 2;
            } else {
                vars.push(tape.param_real(RealTensor::new(shape.clone(), inputs.0[slot].clone()).unwrap()));
                slot += 1;
            }
        }
        let out = (case.build)(&mut tape, &vars);
        let shape = tape.real(out).unwrap().shape().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
        let n = shape.iter().product();
        let probe = tape.constant(RealTensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let prod = tape.mul(out, probe).unwrap();
        let loss = tape.sum(prod).unwrap();
        let value = tape.real(loss).unwrap().data()[0];
        vars.push(loss);
        (value, vars, tape)
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        for case in cases() {
            for seed in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut raw = Vec::new();
                for (shape, complex) in &case.inputs {
                    let n: usize = shape.iter().product();
                    for _ in 0..if *complex { 2 } else { 1 } {
                        raw.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
                    }
                }
                let inputs = Inputs(raw);
                let (_, vars, tape) = run(&case, &inputs, seed + 1000);
                let adj = tape.backward(*vars.last().unwrap()).unwrap();
                let mut analytic = Vec::new();
                for (v, (_, complex)) in vars.iter().zip(&case.inputs) {
                    if *complex {
                        let c = adj.complex(*v);
                        analytic.push(c.re.data().to_vec());
                        analytic.push(c.im.data().to_vec());
                    } else {
                        analytic.push(adj.real(*v).data().to_vec());
                    }
                }
                let numeric = finite_difference_grad(|p: &Inputs| Ok(run(&case, p, seed + 1000).0), &inputs, 1e-6).unwrap();
                for (a, n) in analytic.iter().flatten().zip(numeric.0.iter().flatten()) {
                    let err = relative_error(*a, *n);
                    assert!(err < 1e-5, "{} seed {}: analytic {} numeric {} rel {}", case.name, seed, a, n, err);
                }
            }
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let case = &cases()[10];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs = Inputs(vec![
            (0..15).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..15).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..45).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..45).map(|_| rng.random_range(-1.0..1.0)).collect(),
        ]);
        let grads = |i: &Inputs| {
            let (_, vars, tape) = run(case, i, 9);
            let adj = tape.backward(*vars.last().unwrap()).unwrap();
            (adj.complex(vars[0]), adj.complex(vars[1]))
        };
        let (a, b) = (grads(&inputs), grads(&inputs));
        assert_eq!(a, b);
    }
}
