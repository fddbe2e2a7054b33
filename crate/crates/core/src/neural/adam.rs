use serde::{Deserialize, Serialize};

use super::params::{LayerGrads, ModelParams};
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &LayerGrads,
    state: &mut AdamState,
    t: u64,
    cfg: &AdamConfig,
) -> Result<(), NeuralError> {
    if t < 1 {
        return Err(NeuralError::Parameter("adam step count must be >= 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for (name, p) in params.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| NeuralError::UnknownParam(name.to_string()))?;
        let m = state.m.get_mut(name).ok_or_else(|| NeuralError::UnknownParam(name.to_string()))?;
        if g.dim() != p.dim() || m.dim() != p.dim() {
            return Err(NeuralError::shape(
                "adam",
                format!("{name}: param {:?}, grad {:?}", p.dim(), g.dim()),
            ));
        }
        ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        });
        let v = state.v.get_mut(name).ok_or_else(|| NeuralError::UnknownParam(name.to_string()))?;
        ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        });
        let m = state.m.get(name).expect("checked");
        let v = state.v.get(name).expect("checked");
        ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
            let mh = m / bc1;
            let vh = v / bc2;
            *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        });
    }
    Ok(())
}

/// Adam optimizer with its own step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Self {
            config,
            state: AdamState::zeros_like(params),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &LayerGrads) -> Result<(), NeuralError> {
        self.t += 1;
        adam_step(params, grads, &mut self.state, self.t, &self.config)
    }
}
