//! Forward-process equations: continuous noise-level sampling, closed-form
//! diffusion of a clean segment, its algebraic inverse, the reverse-process
//! posterior mean, and the L1 noise-prediction loss.

use crate::conditioning::FeatureSequence;
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::sampler::NoisePredictor;
use super::schedule::NoiseSchedule;

/// A noise level expressed as `sqrt(alpha_bar)`. `step_index` is set when
/// the level sits on (or was drawn from) the interval of a grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevel {
    pub sqrt_alpha_bar: f64,
    pub step_index: Option<usize>,
}

impl NoiseLevel {
    pub fn continuous(sqrt_alpha_bar: f64) -> Self {
        NoiseLevel { sqrt_alpha_bar, step_index: None }
    }

    pub fn at_step(schedule: &NoiseSchedule, t: usize) -> Self {
        NoiseLevel {
            sqrt_alpha_bar: schedule.alpha_bar(t).sqrt(),
            step_index: Some(t),
        }
    }
}

/// Draw `s` uniform on `{1..T}`, then `sqrt(alpha_bar)` uniform on the
/// interval between `sqrt(alpha_bar_s)` and `sqrt(alpha_bar_{s-1})`
/// (`alpha_bar_0 = 1` covers the `s = 1` interval).
pub fn sample_continuous_noise_level(schedule: &NoiseSchedule, rng: &mut Prng) -> NoiseLevel {
    let s = rng.uniform_int(1, schedule.steps());
    let lo = schedule.alpha_bar(s).sqrt();
    let hi = schedule.alpha_bar(s - 1).sqrt();
    NoiseLevel {
        sqrt_alpha_bar: rng.uniform(lo, hi),
        step_index: Some(s),
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(DwaveError::InvalidArgument(format!(
            "sqrt_alpha_bar {level} outside (0, 1]"
        )));
    }
    Ok(())
}

fn check_lengths(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(DwaveError::ShapeMismatch(format!(
            "{what}: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Closed-form forward marginal: `sqrt(ab) * x0 + sqrt(1 - ab) * eps`.
pub fn forward_diffuse(x0: &[f64], level: NoiseLevel, epsilon: &[f64]) -> Result<Vec<f64>> {
    check_lengths(x0, epsilon, "x0 vs epsilon")?;
    check_level(level.sqrt_alpha_bar)?;
    let sab = level.sqrt_alpha_bar;
    let snb = (1.0 - sab * sab).max(0.0).sqrt();
    Ok(x0
        .iter()
        .zip(epsilon)
        .map(|(&x, &e)| sab * x + snb * e)
        .collect())
}

/// Algebraic inverse of the forward marginal:
/// `(x_t - sqrt(1 - ab) * eps_hat) / sqrt(ab)`.
pub fn predict_x0(x_t: &[f64], eps_hat: &[f64], sqrt_alpha_bar: f64) -> Result<Vec<f64>> {
    check_lengths(x_t, eps_hat, "x_t vs eps_hat")?;
    check_level(sqrt_alpha_bar)?;
    let snb = (1.0 - sqrt_alpha_bar * sqrt_alpha_bar).max(0.0).sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .map(|(&x, &e)| (x - snb * e) / sqrt_alpha_bar)
        .collect())
}

/// Leading coefficient of the reverse-process mean. The printed variant
/// divides by `sqrt(alpha_bar_t)` instead of `sqrt(alpha_t)`; it is kept
/// selectable so the Gaussian-oracle check can show it is wrong.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize,
)]
pub enum MeanForm {
    #[default]
    Standard,
    PrintedAlphaBar,
}

/// Reverse-process posterior mean
/// `coeff * (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat)`
/// with `coeff = 1 / sqrt(alpha_t)` in the standard form.
pub fn posterior_mean(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    posterior_mean_with(MeanForm::Standard, x_t, eps_hat, t, schedule)
}

pub fn posterior_mean_with(
    form: MeanForm,
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_lengths(x_t, eps_hat, "x_t vs eps_hat")?;
    if t == 0 || t > schedule.steps() {
        return Err(DwaveError::InvalidArgument(format!(
            "step {t} outside 1..={}",
            schedule.steps()
        )));
    }
    let alpha = schedule.alpha(t);
    let alpha_bar = schedule.alpha_bar(t);
    let coeff = match form {
        MeanForm::Standard => 1.0 / alpha.sqrt(),
        MeanForm::PrintedAlphaBar => 1.0 / alpha_bar.sqrt(),
    };
    let eps_coeff = (1.0 - alpha) / (1.0 - alpha_bar).sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .map(|(&x, &e)| coeff * (x - eps_coeff * e))
        .collect())
}

/// L1 noise-prediction loss: diffuse `x0` to the given level with `epsilon`,
/// run the predictor, and return the mean absolute error between `epsilon`
/// and the prediction. The mean reduction keeps the loss scale independent
/// of segment length.
pub fn training_loss<P: NoisePredictor + ?Sized>(
    predictor: &P,
    x0: &[f64],
    cond: &FeatureSequence,
    level: NoiseLevel,
    epsilon: &[f64],
) -> Result<f64> {
    let expected = predictor.samples_per_frame() * cond.frame_count();
    if x0.len() != expected {
        return Err(DwaveError::ShapeMismatch(format!(
            "x0 length {} does not match {} frames x {} samples per frame",
            x0.len(),
            cond.frame_count(),
            predictor.samples_per_frame()
        )));
    }
    let x_noisy = forward_diffuse(x0, level, epsilon)?;
    let eps_hat = predictor.predict_noise(&x_noisy, cond, level.sqrt_alpha_bar)?;
    check_lengths(&eps_hat, epsilon, "prediction vs epsilon")?;
    let total: f64 = epsilon
        .iter()
        .zip(&eps_hat)
        .map(|(&e, &p)| (e - p).abs())
        .sum();
    Ok(total / epsilon.len() as f64)
}
