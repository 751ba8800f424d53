use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::Parameter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Parameter]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update from each parameter's accumulated `grad`.
pub fn adam_step(
    params: &mut [&mut Parameter],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if params.len() != state.m.len() {
        return Err(TrainError::Contract(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.grad.numel() != m.len() || p.value.numel() != m.len() {
            return Err(TrainError::Contract(format!(
                "gradient for {} is missing or misshapen",
                p.name
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data().to_vec();
        let w = p.value.data_mut();
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            w[i] -= cfg.lr * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
