//! Reverse-process samplers: full ancestral sampling, the few-step
//! continuous path over a subsampled schedule, and the non-Markovian
//! deterministic sampler that skips steps along a subsequence.

use serde::{Deserialize, Serialize};

use crate::conditioning::FeatureSequence;
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::process::{posterior_mean_with, predict_x0, MeanForm};
use super::schedule::NoiseSchedule;

/// Anything that maps (noisy waveform, conditioning, noise level) to a
/// noise estimate of the same length.
pub trait NoisePredictor: Sync {
    /// Waveform samples generated per conditioning frame.
    fn samples_per_frame(&self) -> usize;

    fn predict_noise(
        &self,
        x_noisy: &[f64],
        cond: &FeatureSequence,
        sqrt_alpha_bar: f64,
    ) -> Result<Vec<f64>>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn samples_per_frame(&self) -> usize {
        (**self).samples_per_frame()
    }
    fn predict_noise(
        &self,
        x_noisy: &[f64],
        cond: &FeatureSequence,
        sqrt_alpha_bar: f64,
    ) -> Result<Vec<f64>> {
        (**self).predict_noise(x_noisy, cond, sqrt_alpha_bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    Ancestral,
    ContinuousFewStep,
    Ddim,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub num_steps: usize,
    /// Stochasticity of the non-Markovian sampler; ignored otherwise.
    pub eta: f64,
    pub seed: u64,
    #[serde(default)]
    pub mean_form: MeanForm,
}

impl SamplerConfig {
    pub fn ancestral(num_steps: usize, seed: u64) -> Self {
        SamplerConfig {
            kind: SamplerKind::Ancestral,
            num_steps,
            eta: 0.0,
            seed,
            mean_form: MeanForm::Standard,
        }
    }

    pub fn continuous_few_step(num_steps: usize, seed: u64) -> Self {
        SamplerConfig {
            kind: SamplerKind::ContinuousFewStep,
            num_steps,
            eta: 0.0,
            seed,
            mean_form: MeanForm::Standard,
        }
    }

    pub fn ddim(num_steps: usize, eta: f64, seed: u64) -> Self {
        SamplerConfig {
            kind: SamplerKind::Ddim,
            num_steps,
            eta,
            seed,
            mean_form: MeanForm::Standard,
        }
    }

    /// Parse a sampler name: `ancestral`, `cont-N`, `ddim-K`.
    pub fn parse_name(name: &str, schedule_steps: usize, seed: u64) -> Result<Self> {
        if name == "ancestral" {
            return Ok(SamplerConfig::ancestral(schedule_steps, seed));
        }
        if let Some(n) = name.strip_prefix("cont-") {
            let n: usize = n.parse().map_err(|_| {
                DwaveError::InvalidArgument(format!("bad step count in sampler name {name}"))
            })?;
            return Ok(SamplerConfig::continuous_few_step(n, seed));
        }
        if let Some(k) = name.strip_prefix("ddim-") {
            let k: usize = k.parse().map_err(|_| {
                DwaveError::InvalidArgument(format!("bad step count in sampler name {name}"))
            })?;
            return Ok(SamplerConfig::ddim(k, 0.0, seed));
        }
        Err(DwaveError::InvalidArgument(format!(
            "unknown sampler {name}; expected ancestral, cont-N or ddim-K"
        )))
    }
}

fn output_len<P: NoisePredictor + ?Sized>(predictor: &P, cond: &FeatureSequence) -> usize {
    predictor.samples_per_frame() * cond.frame_count()
}

/// Full reverse-chain sampling: start from standard normal noise, walk
/// `t = T..1` through the learned posterior mean plus `sqrt(beta_tilde_t)`
/// noise, with no noise added on the final step.
pub fn ancestral_sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: &FeatureSequence,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    if config.kind != SamplerKind::Ancestral {
        return Err(DwaveError::InvalidArgument(
            "ancestral_sample requires SamplerKind::Ancestral".into(),
        ));
    }
    if config.num_steps != schedule.steps() {
        return Err(DwaveError::InvalidArgument(format!(
            "ancestral sampling needs num_steps == schedule steps ({} != {})",
            config.num_steps,
            schedule.steps()
        )));
    }
    let len = output_len(predictor, cond);
    let mut x = rng.standard_normal_vec(len);
    for t in (1..=schedule.steps()).rev() {
        let sab = schedule.alpha_bar(t).sqrt();
        let eps_hat = predictor.predict_noise(&x, cond, sab)?;
        let mut mu = posterior_mean_with(config.mean_form, &x, &eps_hat, t, schedule)?;
        if t > 1 {
            let sigma = schedule.posterior_variance(t).sqrt();
            for m in mu.iter_mut() {
                *m += sigma * rng.standard_normal();
            }
        }
        x = mu;
    }
    Ok(x)
}

/// Few-step ancestral sampling over an index-even subsampled schedule,
/// usable because training conditioned on continuous noise levels.
pub fn continuous_few_step_sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: &FeatureSequence,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    if config.kind != SamplerKind::ContinuousFewStep {
        return Err(DwaveError::InvalidArgument(
            "continuous_few_step_sample requires SamplerKind::ContinuousFewStep".into(),
        ));
    }
    let reduced = schedule.subsample(config.num_steps)?;
    let inner = SamplerConfig {
        kind: SamplerKind::Ancestral,
        num_steps: reduced.steps(),
        ..config.clone()
    };
    ancestral_sample(predictor, cond, &reduced, &inner, rng)
}

/// Non-Markovian sampling along an evenly spaced subsequence of the chain.
/// Deterministic given the starting noise when `eta = 0`.
pub fn ddim_sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: &FeatureSequence,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    if config.kind != SamplerKind::Ddim {
        return Err(DwaveError::InvalidArgument(
            "ddim_sample requires SamplerKind::Ddim".into(),
        ));
    }
    let t_max = schedule.steps();
    let k_steps = config.num_steps;
    if k_steps == 0 || k_steps > t_max {
        return Err(DwaveError::InvalidArgument(format!(
            "num_steps {k_steps} outside 1..={t_max}"
        )));
    }
    if config.eta < 0.0 {
        return Err(DwaveError::InvalidArgument("eta must be >= 0".into()));
    }
    // Evenly spaced in index, ending exactly at T.
    let taus: Vec<usize> = (1..=k_steps).map(|k| k * t_max / k_steps).collect();

    let len = output_len(predictor, cond);
    let mut x = rng.standard_normal_vec(len);
    for k in (1..=k_steps).rev() {
        let t = taus[k - 1];
        let ab_t = schedule.alpha_bar(t);
        let sab_t = ab_t.sqrt();
        let eps_hat = predictor.predict_noise(&x, cond, sab_t)?;
        let x0_hat = predict_x0(&x, &eps_hat, sab_t)?;
        if k == 1 {
            x = x0_hat;
            break;
        }
        let ab_prev = schedule.alpha_bar(taus[k - 2]);
        let sigma = config.eta
            * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt()
            * (1.0 - ab_t / ab_prev).sqrt();
        let dir_coeff = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let sab_prev = ab_prev.sqrt();
        x = x0_hat
            .iter()
            .zip(&eps_hat)
            .map(|(&x0, &e)| sab_prev * x0 + dir_coeff * e)
            .collect();
        if sigma > 0.0 {
            for v in x.iter_mut() {
                *v += sigma * rng.standard_normal();
            }
        }
    }
    Ok(x)
}

/// Dispatch on the configured sampler kind.
pub fn sample<P: NoisePredictor + ?Sized>(
    predictor: &P,
    cond: &FeatureSequence,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    match config.kind {
        SamplerKind::Ancestral => ancestral_sample(predictor, cond, schedule, config, rng),
        SamplerKind::ContinuousFewStep => {
            continuous_few_step_sample(predictor, cond, schedule, config, rng)
        }
        SamplerKind::Ddim => ddim_sample(predictor, cond, schedule, config, rng),
    }
}
