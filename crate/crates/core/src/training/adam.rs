use crate::error::{Error, Result};
use crate::numerics::{Gradients, Parameters};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment accumulators, aligned with the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(p: &P) -> Self {
        Self {
            m: Gradients::zeros_like(p),
            v: Gradients::zeros_like(p),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// before anything is modified.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &Gradients, st: &mut AdamState, lr: f64) -> Result<()> {
    let sizes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    if grads.0.len() != sizes.len() || grads.0.iter().zip(&sizes).any(|(g, &n)| g.len() != n) {
        return Err(Error::shape("adam_step", "gradient layout does not match parameters"));
    }
    if let Some((t, i)) = grads
        .0
        .iter()
        .enumerate()
        .find_map(|(t, g)| g.iter().position(|v| !v.is_finite()).map(|i| (t, i)))
    {
        return Err(Error::Numeric(format!(
            "non-finite gradient {} in tensor {t} at index {i}",
            grads.0[t][i]
        )));
    }
    st.step += 1;
    let bc1 = 1.0 - BETA1.powi(st.step as i32);
    let bc2 = 1.0 - BETA2.powi(st.step as i32);
    for (t, theta) in params.slices_mut().into_iter().enumerate() {
        let (g, m, v) = (&grads.0[t], &mut st.m.0[t], &mut st.v.0[t]);
        for i in 0..theta.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
