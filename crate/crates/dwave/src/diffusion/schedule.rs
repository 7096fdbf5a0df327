//! Noise schedules: the beta/alpha/alpha-bar arrays that define the
//! diffusion chain, plus the index-even subsampling used for few-step
//! inference over a model trained with continuous noise levels.

use crate::error::{DwaveError, Result};

/// The diffusion chain definition. Steps are indexed `1..=T` in the math;
/// accessors take the 1-based index and `alpha_bar(0) == 1` by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Build a schedule from explicit betas. Betas must be strictly
    /// increasing inside the open unit interval.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(DwaveError::InvalidSchedule("step count must be at least 1".into()));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(DwaveError::InvalidSchedule(format!(
                    "beta_{} = {} outside the open interval (0, 1)",
                    i + 1,
                    b
                )));
            }
            if i > 0 && betas[i - 1] >= b {
                return Err(DwaveError::InvalidSchedule(format!(
                    "betas must be strictly increasing (beta_{} = {} >= beta_{} = {})",
                    i,
                    betas[i - 1],
                    i + 1,
                    b
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|&b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule { betas, alphas, alpha_bars })
    }

    fn from_parts(betas: Vec<f64>, alphas: Vec<f64>, alpha_bars: Vec<f64>) -> Self {
        NoiseSchedule { betas, alphas, alpha_bars }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t`, 1-based.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t = 1 - beta_t`, 1-based.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Cumulative product `alpha_bar_t`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Reverse-process variance `beta_tilde_t`; zero at `t = 1` because
    /// `alpha_bar_0 = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// Evenly spaced (in index) subsequence of the alpha-bar grid including
    /// the final step, with betas recomputed so the alpha-bar recursion
    /// holds on the shorter chain. Running the ancestral sampler over the
    /// result is the few-step path enabled by continuous-level training.
    pub fn subsample(&self, num_steps: usize) -> Result<NoiseSchedule> {
        let t_max = self.steps();
        if num_steps == 0 || num_steps > t_max {
            return Err(DwaveError::InvalidSchedule(format!(
                "num_steps {num_steps} outside 1..={t_max}"
            )));
        }
        if num_steps == t_max {
            return Ok(self.clone());
        }
        let mut betas = Vec::with_capacity(num_steps);
        let mut alphas = Vec::with_capacity(num_steps);
        let mut alpha_bars = Vec::with_capacity(num_steps);
        let mut prev_bar = 1.0;
        for k in 1..=num_steps {
            let tau = k * t_max / num_steps;
            let bar = self.alpha_bar(tau);
            let alpha = bar / prev_bar;
            betas.push(1.0 - alpha);
            alphas.push(alpha);
            alpha_bars.push(bar);
            prev_bar = bar;
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) || (i > 0 && betas[i - 1] >= b) {
                return Err(DwaveError::InvalidSchedule(format!(
                    "subsampled betas are not strictly increasing in (0, 1) at step {}",
                    i + 1
                )));
            }
        }
        Ok(NoiseSchedule::from_parts(betas, alphas, alpha_bars))
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end` inclusive.
pub fn make_linear_schedule(t_max: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(DwaveError::InvalidSchedule("step count must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_end < 1.0) {
        return Err(DwaveError::InvalidSchedule(format!(
            "beta bounds ({beta_start}, {beta_end}) outside the open interval (0, 1)"
        )));
    }
    if beta_start > beta_end {
        return Err(DwaveError::InvalidSchedule(format!(
            "beta_start {beta_start} > beta_end {beta_end}"
        )));
    }
    if t_max == 1 {
        if beta_start != beta_end {
            return Err(DwaveError::InvalidSchedule(
                "a single-step schedule needs beta_start == beta_end".into(),
            ));
        }
        return NoiseSchedule::from_betas(vec![beta_start]);
    }
    if beta_start == beta_end {
        return Err(DwaveError::InvalidSchedule(
            "betas must be strictly increasing; widen (beta_start, beta_end)".into(),
        ));
    }
    let step = (beta_end - beta_start) / (t_max - 1) as f64;
    let betas: Vec<f64> = (0..t_max)
        .map(|i| {
            if i + 1 == t_max {
                beta_end
            } else {
                beta_start + step * i as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// Default training schedule: linear betas 1e-6 to 1e-2 over 1000 steps,
/// which drives `alpha_bar_T` to about 7e-3.
pub fn default_schedule() -> NoiseSchedule {
    make_linear_schedule(1000, 1e-6, 1e-2).expect("default schedule is valid")
}
