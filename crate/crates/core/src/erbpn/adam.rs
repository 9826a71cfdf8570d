use crate::error::{param, Result};

/// Bias-corrected ADAM over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
    /// Halve the learning rate every this many epochs (0 disables decay).
    pub halve_every: usize,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate,
            halve_every: 100,
        }
    }

    /// Learning rate in effect during `epoch` (zero-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.halve_every {
            0 => self.learning_rate,
            n => self.learning_rate * 0.5f64.powi((epoch / n) as i32),
        }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, epoch: usize) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return param(format!(
            "ADAM sizes disagree: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let lr = state.learning_rate_at(epoch);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
