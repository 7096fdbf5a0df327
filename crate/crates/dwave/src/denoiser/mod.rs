//! The trainable noise-prediction network: a conditioning branch that
//! upsamples frame features to sample resolution, fused by feature-wise
//! affine modulation with a strided-convolution waveform branch, with a
//! sinusoidal noise-level embedding injected at every resolution.

mod checkpoint;
mod gradcheck;
mod model;
mod tensor;

pub use checkpoint::{read_container, write_container, ContainerPayload};
pub use gradcheck::{grad_check, max_rel_error_vs_fd};
pub use model::{backprop_gradients, denoise, upsample_condition, DenoiserModel};
pub use tensor::Tensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DwaveError, Result};
use crate::rng::Prng;

pub type GradientSet = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Per-stage conditioning upsampling factors; the product is the
    /// samples-per-frame ratio (640 at the full-rate preset).
    pub upsample_factors: Vec<usize>,
    pub feature_dim: usize,
    pub base_channels: usize,
    pub noise_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            upsample_factors: vec![5, 4, 4, 2, 2, 2],
            feature_dim: 80,
            base_channels: 32,
            noise_embed_dim: 128,
        }
    }
}

impl DenoiserConfig {
    /// Reduced preset for 8 kHz audio: total upsampling 64.
    pub fn desk_8k(feature_dim: usize, base_channels: usize) -> Self {
        DenoiserConfig {
            upsample_factors: vec![4, 4, 2, 2],
            feature_dim,
            base_channels,
            noise_embed_dim: 64,
        }
    }

    /// Small configuration for gradient audits (about 2k parameters).
    pub fn tiny_reference() -> Self {
        DenoiserConfig {
            upsample_factors: vec![2, 2],
            feature_dim: 6,
            base_channels: 6,
            noise_embed_dim: 16,
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        self.upsample_factors.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.upsample_factors.is_empty() {
            return Err(DwaveError::InvalidArgument("no upsampling factors".into()));
        }
        if self.upsample_factors.contains(&0) {
            return Err(DwaveError::InvalidArgument("zero upsampling factor".into()));
        }
        if self.feature_dim == 0 || self.base_channels == 0 {
            return Err(DwaveError::InvalidArgument("zero-sized layer dimension".into()));
        }
        if self.noise_embed_dim < 2 || self.noise_embed_dim % 2 != 0 {
            return Err(DwaveError::InvalidArgument(
                "noise_embed_dim must be even and at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Downsampling strides of the waveform branch (reversed factors).
    pub(crate) fn down_strides(&self) -> Vec<usize> {
        self.upsample_factors.iter().rev().copied().collect()
    }

    /// Expected tensor names and shapes, in canonical order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.base_channels;
        let f = self.feature_dim;
        let e = self.noise_embed_dim;
        let k_stages = self.upsample_factors.len();
        let mut shapes = vec![
            ("in_conv.w".to_string(), vec![c, 1, 5]),
            ("in_conv.b".to_string(), vec![c]),
            ("cond_in.w".to_string(), vec![c, f, 3]),
            ("cond_in.b".to_string(), vec![c]),
            ("nl.mlp1.w".to_string(), vec![e, e]),
            ("nl.mlp1.b".to_string(), vec![e]),
            ("nl.mlp2.w".to_string(), vec![e, e]),
            ("nl.mlp2.b".to_string(), vec![e]),
        ];
        for (i, &g) in self.down_strides().iter().enumerate() {
            shapes.push((format!("down.{i}.w"), vec![c, c, 2 * g]));
            shapes.push((format!("down.{i}.b"), vec![c]));
        }
        for i in 0..=k_stages {
            for part in ["gamma", "xi"] {
                shapes.push((format!("film.{i}.{part}_conv.w"), vec![c, c, 1]));
                shapes.push((format!("film.{i}.{part}_conv.b"), vec![c]));
                shapes.push((format!("film.{i}.{part}_nl.w"), vec![c, e]));
                shapes.push((format!("film.{i}.{part}_nl.b"), vec![c]));
            }
        }
        for i in 1..=k_stages {
            // transposed conv, kernel twice the stage's upsampling factor
            let f = self.upsample_factors[i - 1];
            shapes.push((format!("up.{i}.w"), vec![c, c, 2 * f]));
            shapes.push((format!("up.{i}.b"), vec![c]));
        }
        shapes.push(("out_conv.w".to_string(), vec![1, c, 3]));
        shapes.push(("out_conv.b".to_string(), vec![1]));
        shapes
    }
}

/// Sinusoidal embedding of `5000 * sqrt(alpha_bar)`: `dim/2` sine and
/// `dim/2` cosine components at geometrically spaced frequencies.
pub fn noise_level_embedding(sqrt_alpha_bar: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let position = 5000.0 * sqrt_alpha_bar;
    let mut out = Vec::with_capacity(dim);
    for j in 0..half {
        let omega = 10000f64.powf(-(j as f64) / half as f64);
        out.push((position * omega).sin());
    }
    for j in 0..half {
        let omega = 10000f64.powf(-(j as f64) / half as f64);
        out.push((position * omega).cos());
    }
    out
}

/// All trainable weights plus the architecture hyperparameters that fix
/// their shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    config: DenoiserConfig,
    tensors: BTreeMap<String, Tensor>,
}

fn quantize_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl DenoiserParams {
    /// Training initialization: centered uniform scaled by fan-in, zero
    /// biases (modulation scale biases start at 1 so the conditioning
    /// branch passes through), zero-initialized output layer. Values are
    /// quantized to f32 so a fresh model round-trips through checkpoints
    /// bit-exactly.
    pub fn init(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        Self::init_inner(config, seed, true)
    }

    /// Like [`DenoiserParams::init`] but with a random output layer;
    /// used by gradient audits so every layer carries signal.
    pub fn init_all_random(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        Self::init_inner(config, seed, false)
    }

    fn init_inner(config: &DenoiserConfig, seed: u64, zero_output: bool) -> Result<Self> {
        config.validate()?;
        let mut rng = Prng::derive(seed, "denoiser-init");
        let mut tensors = BTreeMap::new();
        for (name, shape) in config.tensor_shapes() {
            let numel: usize = shape.iter().product();
            let tensor = if name.ends_with(".b") {
                let fill = if name.contains("gamma_conv") { 1.0 } else { 0.0 };
                Tensor::from_data(shape, vec![fill; numel])
            } else {
                // fan-in: everything but the leading (output) dimension
                let fan_in: usize = shape[1..].iter().product();
                let scale = 1.0 / (fan_in as f64).sqrt();
                let zero = zero_output && name == "out_conv.w";
                let data: Vec<f64> = (0..numel)
                    .map(|_| {
                        let v = rng.uniform(-scale, scale);
                        if zero {
                            0.0
                        } else {
                            quantize_f32(v)
                        }
                    })
                    .collect();
                Tensor::from_data(shape, data)
            };
            tensors.insert(name, tensor);
        }
        Ok(DenoiserParams { config: config.clone(), tensors })
    }

    /// Rebuild from a tensor map, validating names, shapes, and finiteness.
    pub fn from_tensors(config: &DenoiserConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = config.tensor_shapes();
        if tensors.len() != expected.len() {
            return Err(DwaveError::ConfigMismatch(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, shape) in &expected {
            let tensor = tensors.get(name).ok_or_else(|| {
                DwaveError::ConfigMismatch(format!("missing tensor {name}"))
            })?;
            if &tensor.shape != shape {
                return Err(DwaveError::ConfigMismatch(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    tensor.shape, shape
                )));
            }
            if !tensor.is_finite() {
                return Err(DwaveError::NonFinite { context: format!("tensor {name}") });
            }
        }
        Ok(DenoiserParams { config: config.clone(), tensors })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub(crate) fn tensor(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Zero-filled gradient set matching the parameter shapes.
    pub fn zero_gradients(&self) -> GradientSet {
        self.tensors
            .iter()
            .map(|(name, t)| (name.clone(), Tensor::zeros(t.shape.clone())))
            .collect()
    }

    /// Apply `params[i] += scale * delta[i]` tensor-wise.
    pub fn axpy(&mut self, scale: f64, delta: &GradientSet) {
        for (name, tensor) in self.tensors.iter_mut() {
            let d = &delta[name];
            for (p, g) in tensor.data.iter_mut().zip(&d.data) {
                *p += scale * g;
            }
        }
    }
}

/// One supervised example: a clean segment, its conditioning frames, the
/// drawn noise level, and the noise realization.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub x0: Vec<f64>,
    pub cond: crate::conditioning::FeatureSequence,
    pub level: crate::diffusion::NoiseLevel,
    pub epsilon: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shapes_cover_expected_parameter_count() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 0).unwrap();
        assert!(params.param_count() <= 10_000, "{}", params.param_count());
        assert!(params.param_count() > 500);
    }

    #[test]
    fn default_config_upsamples_640() {
        assert_eq!(DenoiserConfig::default().samples_per_frame(), 640);
        assert_eq!(DenoiserConfig::desk_8k(32, 16).samples_per_frame(), 64);
    }

    #[test]
    fn init_is_deterministic_and_f32_exact() {
        let config = DenoiserConfig::tiny_reference();
        let a = DenoiserParams::init(&config, 7).unwrap();
        let b = DenoiserParams::init(&config, 7).unwrap();
        assert_eq!(a, b);
        for t in a.tensors().values() {
            for &v in &t.data {
                assert_eq!(v, v as f32 as f64);
            }
        }
        assert!(a.tensor("out_conv.w").data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_tensors_rejects_feature_dim_mismatch() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 0).unwrap();
        let mut other = config.clone();
        other.feature_dim = 8;
        let err = DenoiserParams::from_tensors(&other, params.tensors().clone());
        assert!(err.is_err());
    }

    #[test]
    fn config_rejects_zero_factor() {
        let config = DenoiserConfig {
            upsample_factors: vec![4, 0, 2],
            ..DenoiserConfig::tiny_reference()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn embedding_is_deterministic_and_separates_levels() {
        let dim = 32;
        let a = noise_level_embedding(0.5, dim);
        let b = noise_level_embedding(0.5, dim);
        assert_eq!(a, b);
        let levels: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let embeds: Vec<Vec<f64>> = levels
            .iter()
            .map(|&l| noise_level_embedding(l, dim))
            .collect();
        for i in 0..embeds.len() {
            for j in (i + 1)..embeds.len() {
                assert_ne!(embeds[i], embeds[j], "levels {} and {}", levels[i], levels[j]);
            }
        }
    }
}
