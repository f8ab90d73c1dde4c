use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tensor;
use crate::model::{ModelParams, ParamGrads};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One Adam update. A non-finite gradient aborts before anything changes.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ParamGrads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if let Some(i) = grads.tensors.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { tensor: params.names()[i].clone() });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads.tensors[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
