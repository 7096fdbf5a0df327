//! Diffusion core: noise schedules, the forward process, the training
//! objective, and the reverse-process samplers. All operations are pure
//! given an explicit seeded random source.

mod process;
mod sampler;
mod schedule;

pub use process::{
    forward_diffuse, posterior_mean, posterior_mean_with, predict_x0,
    sample_continuous_noise_level, training_loss, MeanForm, NoiseLevel,
};
pub use sampler::{
    ancestral_sample, continuous_few_step_sample, ddim_sample, sample, NoisePredictor,
    SamplerConfig, SamplerKind,
};
pub use schedule::{default_schedule, make_linear_schedule, NoiseSchedule};
