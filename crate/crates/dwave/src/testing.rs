//! Closed-form reference predictors used to validate the samplers.
//! These never touch the trainable network; they exist so sampler
//! correctness can be checked against analytic ground truth.

use crate::conditioning::FeatureSequence;
use crate::diffusion::NoisePredictor;
use crate::error::Result;

/// Optimal noise predictor for scalar data `x0 ~ N(0, sigma^2)`:
/// `eps*(x_t) = sqrt(1 - ab) * x_t / (ab * sigma^2 + 1 - ab)`.
/// With this predictor the reverse chain should reproduce `N(0, sigma^2)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOracle {
    pub sigma2: f64,
}

impl GaussianOracle {
    pub fn new(sigma2: f64) -> Self {
        GaussianOracle { sigma2 }
    }
}

impl NoisePredictor for GaussianOracle {
    fn samples_per_frame(&self) -> usize {
        1
    }

    fn predict_noise(
        &self,
        x_noisy: &[f64],
        _cond: &FeatureSequence,
        sqrt_alpha_bar: f64,
    ) -> Result<Vec<f64>> {
        let ab = sqrt_alpha_bar * sqrt_alpha_bar;
        let coeff = (1.0 - ab).sqrt() / (ab * self.sigma2 + 1.0 - ab);
        Ok(x_noisy.iter().map(|&x| coeff * x).collect())
    }
}
