//! Finite-difference audit of the analytic gradients.

use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::model::{example_loss_and_grads, DenoiserModel};
use super::{DenoiserParams, GradientSet, TrainingExample};
use crate::diffusion::training_loss;

fn loss_of(params: &DenoiserParams, example: &TrainingExample) -> Result<f64> {
    training_loss(
        &DenoiserModel::new(params),
        &example.x0,
        &example.cond,
        example.level,
        &example.epsilon,
    )
}

/// Worst relative error between the supplied analytic gradients and central
/// finite differences over the given coordinates.
pub fn max_rel_error_vs_fd(
    params: &DenoiserParams,
    example: &TrainingExample,
    h: f64,
    grads: &GradientSet,
    coords: &[(String, usize)],
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DwaveError::InvalidArgument(format!("step size h = {h} is invalid")));
    }
    let mut worst = 0.0f64;
    for (name, idx) in coords {
        let analytic = grads[name].data[*idx];
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus.tensor_mut(name).unwrap().data[*idx] += h;
        minus.tensor_mut(name).unwrap().data[*idx] -= h;
        // use the realized parameter difference, not 2h, so rounding in the
        // perturbation itself cannot masquerade as gradient error
        let span =
            plus.tensor(name).data[*idx] - minus.tensor(name).data[*idx];
        let fd = (loss_of(&plus, example)? - loss_of(&minus, example)?) / span;
        let rel = (fd - analytic).abs() / (fd.abs() + analytic.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Compare analytic and central-difference gradients on a random parameter
/// subset (at least 200 coordinates when the model has that many); returns
/// the worst relative error. Coordinate choice is seeded and reproducible.
pub fn grad_check(params: &DenoiserParams, example: &TrainingExample, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DwaveError::InvalidArgument(format!("step size h = {h} is invalid")));
    }
    let (_loss, grads) = example_loss_and_grads(params, example)?;

    let mut all_coords: Vec<(String, usize)> = Vec::with_capacity(params.param_count());
    for (name, tensor) in params.tensors() {
        for idx in 0..tensor.numel() {
            all_coords.push((name.clone(), idx));
        }
    }
    let target = 220.min(all_coords.len());
    let mut rng = Prng::derive(0xD1FF, "grad-check-coordinates");
    // partial Fisher-Yates: the first `target` entries become the sample
    for i in 0..target {
        let j = rng.uniform_int(i, all_coords.len() - 1);
        all_coords.swap(i, j);
    }
    all_coords.truncate(target);
    max_rel_error_vs_fd(params, example, h, &grads, &all_coords)
}
