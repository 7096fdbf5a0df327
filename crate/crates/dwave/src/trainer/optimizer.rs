//! Adam with bias correction and the warmup-plus-cosine learning-rate
//! schedule. All accumulation is in f64.

use std::collections::BTreeMap;

use crate::denoiser::{DenoiserParams, GradientSet, Tensor};
use crate::error::{DwaveError, Result};

use super::TrainConfig;

/// Linear ramp to `lr_peak` over the warmup, then a half-cosine down to 0
/// at `total_steps`.
pub fn lr_at_step(step: u64, config: &TrainConfig) -> Result<f64> {
    if step > config.total_steps {
        return Err(DwaveError::InvalidArgument(format!(
            "step {step} beyond total_steps {}",
            config.total_steps
        )));
    }
    if step <= config.warmup_steps {
        if config.warmup_steps == 0 {
            return Ok(config.lr_peak);
        }
        return Ok(config.lr_peak * step as f64 / config.warmup_steps as f64);
    }
    let progress =
        (step - config.warmup_steps) as f64 / (config.total_steps - config.warmup_steps) as f64;
    Ok(config.lr_peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(params: &DenoiserParams) -> Self {
        OptimizerState {
            m: params.zero_gradients(),
            v: params.zero_gradients(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn from_moments(m: GradientSet, v: GradientSet, step: u64) -> Self {
        OptimizerState { m, v, step, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Scale gradients down to the given global L2 norm when they exceed it.
pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm2: f64 = grads
        .values()
        .map(|t| t.data.iter().map(|&g| g * g).sum::<f64>())
        .sum();
    let norm = norm2.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for g in t.data.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

/// Standard bias-corrected Adam update, applied in place.
pub fn adam_step(
    params: &mut DenoiserParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads {
        if !g.data.iter().all(|v| v.is_finite()) {
            return Err(DwaveError::NonFinite { context: format!("gradient of {name}") });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let names: Vec<String> = grads.keys().cloned().collect();
    for name in names {
        let g = &grads[&name];
        let m = state.m.get_mut(&name).expect("moment shapes match params");
        let v = state.v.get_mut(&name).expect("moment shapes match params");
        let p = params
            .tensor_mut(&name)
            .ok_or_else(|| DwaveError::ConfigMismatch(format!("unknown tensor {name}")))?;
        for i in 0..g.data.len() {
            let grad = g.data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * grad;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * grad * grad;
            let m_hat = m.data[i] / bias1;
            let v_hat = v.data[i] / bias2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Moment tensors flattened for the checkpoint container.
pub(crate) fn moments_to_tensors(state: &OptimizerState) -> BTreeMap<String, Tensor> {
    let mut out = BTreeMap::new();
    for (name, t) in &state.m {
        out.insert(format!("opt.m.{name}"), t.clone());
    }
    for (name, t) in &state.v {
        out.insert(format!("opt.v.{name}"), t.clone());
    }
    out
}
