use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::ParamStore;
use crate::nn::tensor::Tensor;

/// ADAM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates of a bias-corrected ADAM optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        AdamState { config, step_count: 0, first_moment: zeros(), second_moment: zeros() }
    }
}

/// One ADAM update from the gradients stored in `params`, which are then
/// zeroed. A non-finite gradient leaves every parameter untouched.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(Error::dim("optimizer state does not match the parameter list"));
    }
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", p.name)));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first_moment).zip(&mut state.second_moment) {
        let g = p.grad.data();
        let theta = p.tensor.data_mut();
        for i in 0..g.len() {
            let mi = &mut m.data_mut()[i];
            *mi = beta1 * *mi + (1.0 - beta1) * g[i];
            let m_hat = *mi / c1;
            let vi = &mut v.data_mut()[i];
            *vi = beta2 * *vi + (1.0 - beta2) * g[i] * g[i];
            let v_hat = *vi / c2;
            theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        p.grad.fill(0.0);
    }
    Ok(())
}
