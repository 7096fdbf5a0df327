//! Conditional diffusion waveform synthesis and speech enhancement.
//!
//! The toolkit trains a noise-prediction diffusion model to synthesize
//! waveforms conditioned on frame-level features, supports clean/noisy
//! fine-tuning, quality-threshold corpus filtering, and fast inference via
//! reduced-step and non-Markovian sampling.

pub mod audio;
pub mod conditioning;
pub mod diffusion;
pub mod enhance;
pub mod error;
pub mod rng;
pub mod dataprep;
pub mod denoiser;
pub mod synth;
pub mod testing;
pub mod trainer;

pub use error::{DwaveError, Result};
