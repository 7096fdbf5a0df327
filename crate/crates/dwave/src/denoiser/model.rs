//! Forward evaluation and exact gradients of the denoiser. The waveform
//! branch downsamples the noisy input through strided convolutions; the
//! conditioning branch upsamples features stage by stage, and at every
//! resolution a feature-wise affine modulation computed from the waveform
//! branch and the noise-level embedding is applied.

use rayon::prelude::*;

use crate::conditioning::FeatureSequence;
use crate::diffusion::{forward_diffuse, NoisePredictor};
use crate::error::{DwaveError, Result};

use super::tensor::{
    check_finite, conv1d_same, conv1d_same_backward, conv1d_strided, conv1d_strided_backward,
    conv1d_transposed, conv1d_transposed_backward, linear, linear_backward, silu_grad,
    silu_slice, upsample_nearest, Tensor,
};
use super::{noise_level_embedding, DenoiserConfig, DenoiserParams, GradientSet, TrainingExample};

/// Staged nearest-neighbour upsampling of a feature sequence through the
/// factor list; returns one `feature_dim x length` matrix per stage, ending
/// at sample resolution.
pub fn upsample_condition(cond: &FeatureSequence, factors: &[usize]) -> Result<Vec<Vec<f64>>> {
    if factors.is_empty() {
        return Err(DwaveError::InvalidArgument("no upsampling factors".into()));
    }
    if factors.contains(&0) {
        return Err(DwaveError::InvalidArgument("zero upsampling factor".into()));
    }
    let dim = cond.feature_dim();
    let mut current = transpose_features(cond);
    let mut len = cond.frame_count();
    let mut stages = Vec::with_capacity(factors.len());
    for &f in factors {
        current = upsample_nearest(&current, dim, len, f);
        len *= f;
        stages.push(current.clone());
    }
    Ok(stages)
}

/// Frame-major `L x F` features to channel-major `F x L`.
fn transpose_features(cond: &FeatureSequence) -> Vec<f64> {
    let frames = cond.frame_count();
    let dim = cond.feature_dim();
    let mut out = vec![0.0; frames * dim];
    for t in 0..frames {
        let row = cond.frame(t);
        for (f, &v) in row.iter().enumerate() {
            out[f * frames + t] = v;
        }
    }
    out
}

pub(crate) struct Workspace {
    lens: Vec<usize>,
    x_noisy: Vec<f64>,
    down_acts: Vec<Vec<f64>>,
    down_silu_in: Vec<Vec<f64>>,
    nl_raw: Vec<f64>,
    nl_hidden: Vec<f64>,
    nl_hidden_silu: Vec<f64>,
    nl: Vec<f64>,
    cond_mat: Vec<f64>,
    stage_pre: Vec<Vec<f64>>,
    stage_gamma: Vec<Vec<f64>>,
    stage_z: Vec<Vec<f64>>,
    stage_u: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

fn film_apply(
    params: &DenoiserParams,
    stage: usize,
    feat: &[f64],
    nl: &[f64],
    pre: &[f64],
    channels: usize,
    len: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let gconv_w = params.tensor(&format!("film.{stage}.gamma_conv.w"));
    let gconv_b = params.tensor(&format!("film.{stage}.gamma_conv.b"));
    let xconv_w = params.tensor(&format!("film.{stage}.xi_conv.w"));
    let xconv_b = params.tensor(&format!("film.{stage}.xi_conv.b"));
    let gnl_w = params.tensor(&format!("film.{stage}.gamma_nl.w"));
    let gnl_b = params.tensor(&format!("film.{stage}.gamma_nl.b"));
    let xnl_w = params.tensor(&format!("film.{stage}.xi_nl.w"));
    let xnl_b = params.tensor(&format!("film.{stage}.xi_nl.b"));

    let mut gamma = conv1d_same(feat, channels, len, &gconv_w.data, &gconv_b.data, channels, 1);
    let mut xi = conv1d_same(feat, channels, len, &xconv_w.data, &xconv_b.data, channels, 1);
    let gamma_nl = linear(nl, &gnl_w.data, &gnl_b.data, channels);
    let xi_nl = linear(nl, &xnl_w.data, &xnl_b.data, channels);
    for c in 0..channels {
        let g = gamma_nl[c];
        for v in gamma[c * len..(c + 1) * len].iter_mut() {
            *v += g;
        }
        let x = xi_nl[c];
        for v in xi[c * len..(c + 1) * len].iter_mut() {
            *v += x;
        }
    }
    let z: Vec<f64> = gamma
        .iter()
        .zip(pre)
        .zip(&xi)
        .map(|((&g, &p), &x)| g * p + x)
        .collect();
    check_finite(&format!("film.{stage}"), &z)?;
    let u = silu_slice(&z);
    Ok((gamma, z, u))
}

pub(crate) fn forward_cached(
    params: &DenoiserParams,
    x_noisy: &[f64],
    cond: &FeatureSequence,
    sqrt_alpha_bar: f64,
) -> Result<Workspace> {
    let config = params.config();
    let channels = config.base_channels;
    let frames = cond.frame_count();
    if cond.feature_dim() != config.feature_dim {
        return Err(DwaveError::ShapeMismatch(format!(
            "conditioning feature_dim {} != configured {}",
            cond.feature_dim(),
            config.feature_dim
        )));
    }
    let expected_len = config.samples_per_frame() * frames;
    if x_noisy.len() != expected_len {
        return Err(DwaveError::ShapeMismatch(format!(
            "waveform length {} != {} frames x {} samples per frame",
            x_noisy.len(),
            frames,
            config.samples_per_frame()
        )));
    }
    if !(sqrt_alpha_bar > 0.0 && sqrt_alpha_bar <= 1.0) {
        return Err(DwaveError::InvalidArgument(format!(
            "sqrt_alpha_bar {sqrt_alpha_bar} outside (0, 1]"
        )));
    }

    let strides = config.down_strides();
    let stages = strides.len();
    let mut lens = Vec::with_capacity(stages + 1);
    lens.push(expected_len);
    for &g in &strides {
        lens.push(lens.last().unwrap() / g);
    }

    // waveform branch
    let in_w = params.tensor("in_conv.w");
    let in_b = params.tensor("in_conv.b");
    let mut down_acts = Vec::with_capacity(stages + 1);
    let mut down_silu_in = Vec::with_capacity(stages);
    let a0 = conv1d_same(x_noisy, 1, lens[0], &in_w.data, &in_b.data, channels, 5);
    check_finite("in_conv", &a0)?;
    down_acts.push(a0);
    for (i, &g) in strides.iter().enumerate() {
        let h = silu_slice(&down_acts[i]);
        let w = params.tensor(&format!("down.{i}.w"));
        let b = params.tensor(&format!("down.{i}.b"));
        let a = conv1d_strided(&h, channels, lens[i], &w.data, &b.data, channels, 2 * g, g, g / 2);
        check_finite(&format!("down.{i}"), &a)?;
        down_silu_in.push(h);
        down_acts.push(a);
    }

    // noise-level embedding
    let nl_raw = noise_level_embedding(sqrt_alpha_bar, config.noise_embed_dim);
    let m1_w = params.tensor("nl.mlp1.w");
    let m1_b = params.tensor("nl.mlp1.b");
    let m2_w = params.tensor("nl.mlp2.w");
    let m2_b = params.tensor("nl.mlp2.b");
    let nl_hidden = linear(&nl_raw, &m1_w.data, &m1_b.data, config.noise_embed_dim);
    let nl_hidden_silu = silu_slice(&nl_hidden);
    let nl = linear(&nl_hidden_silu, &m2_w.data, &m2_b.data, config.noise_embed_dim);
    check_finite("nl.mlp", &nl)?;

    // conditioning branch, frame rate up to sample rate
    let cond_mat = transpose_features(cond);
    let ci_w = params.tensor("cond_in.w");
    let ci_b = params.tensor("cond_in.b");
    let u0_pre = conv1d_same(&cond_mat, config.feature_dim, frames, &ci_w.data, &ci_b.data, channels, 3);
    check_finite("cond_in", &u0_pre)?;

    let mut stage_pre = Vec::with_capacity(stages + 1);
    let mut stage_gamma = Vec::with_capacity(stages + 1);
    let mut stage_z = Vec::with_capacity(stages + 1);
    let mut stage_u = Vec::with_capacity(stages + 1);

    let (gamma0, z0, u0) = film_apply(params, 0, &down_acts[stages], &nl, &u0_pre, channels, frames)?;
    stage_pre.push(u0_pre);
    stage_gamma.push(gamma0);
    stage_z.push(z0);
    stage_u.push(u0);

    for stage in 1..=stages {
        let factor = config.upsample_factors[stage - 1];
        let prev_len = lens[stages - stage + 1];
        let len = lens[stages - stage];
        let w = params.tensor(&format!("up.{stage}.w"));
        let b = params.tensor(&format!("up.{stage}.b"));
        let pre = conv1d_transposed(
            &stage_u[stage - 1],
            channels,
            prev_len,
            &w.data,
            &b.data,
            channels,
            factor,
        );
        debug_assert_eq!(pre.len(), channels * len);
        check_finite(&format!("up.{stage}"), &pre)?;
        let feat = &down_acts[stages - stage];
        let (gamma, z, u) = film_apply(params, stage, feat, &nl, &pre, channels, len)?;
        stage_pre.push(pre);
        stage_gamma.push(gamma);
        stage_z.push(z);
        stage_u.push(u);
    }

    let out_w = params.tensor("out_conv.w");
    let out_b = params.tensor("out_conv.b");
    let output = conv1d_same(&stage_u[stages], channels, lens[0], &out_w.data, &out_b.data, 1, 3);
    check_finite("out_conv", &output)?;

    Ok(Workspace {
        lens,
        x_noisy: x_noisy.to_vec(),
        down_acts,
        down_silu_in,
        nl_raw,
        nl_hidden,
        nl_hidden_silu,
        nl,
        cond_mat,
        stage_pre,
        stage_gamma,
        stage_z,
        stage_u,
        output,
    })
}

/// Evaluate the noise estimate for one segment. Pure: identical inputs give
/// bit-identical outputs.
pub fn denoise(
    params: &DenoiserParams,
    x_noisy: &[f64],
    cond: &FeatureSequence,
    sqrt_alpha_bar: f64,
) -> Result<Vec<f64>> {
    Ok(forward_cached(params, x_noisy, cond, sqrt_alpha_bar)?.output)
}

fn add_into(acc: &mut GradientSet, name: &str, shape: &[usize], data: Vec<f64>) {
    let entry = acc
        .entry(name.to_string())
        .or_insert_with(|| Tensor::zeros(shape.to_vec()));
    for (a, g) in entry.data.iter_mut().zip(data) {
        *a += g;
    }
}

/// Backward pass for one example. `grad_output` is d(loss)/d(prediction).
pub(crate) fn backward(
    params: &DenoiserParams,
    ws: &Workspace,
    grad_output: &[f64],
) -> GradientSet {
    let config = params.config();
    let channels = config.base_channels;
    let stages = config.upsample_factors.len();
    let frames = ws.lens[stages];
    let mut grads = GradientSet::new();

    // output conv
    let out_w = params.tensor("out_conv.w");
    let (g_u_last, gw, gb) = conv1d_same_backward(
        &ws.stage_u[stages],
        channels,
        ws.lens[0],
        &out_w.data,
        1,
        3,
        grad_output,
    );
    add_into(&mut grads, "out_conv.w", &out_w.shape, gw);
    add_into(&mut grads, "out_conv.b", &[1], gb);

    let mut grad_down_acts: Vec<Vec<f64>> = ws
        .down_acts
        .iter()
        .map(|a| vec![0.0; a.len()])
        .collect();
    let mut grad_nl = vec![0.0; config.noise_embed_dim];
    let mut grad_u = g_u_last;

    // up path, last stage first
    for stage in (0..=stages).rev() {
        let len = ws.lens[stages - stage];
        let z = &ws.stage_z[stage];
        let gamma = &ws.stage_gamma[stage];
        let pre = &ws.stage_pre[stage];
        // u = silu(z); z = gamma .* pre + xi
        let gz: Vec<f64> = grad_u
            .iter()
            .zip(z)
            .map(|(&g, &zv)| g * silu_grad(zv))
            .collect();
        let g_gamma: Vec<f64> = gz.iter().zip(pre).map(|(&g, &p)| g * p).collect();
        let g_pre: Vec<f64> = gz.iter().zip(gamma).map(|(&g, &ga)| g * ga).collect();

        // modulation parameters; the channel sums feed the embedding linears
        let feat = &ws.down_acts[stages - stage];
        for (part, g_part) in [("gamma", &g_gamma), ("xi", &gz)] {
            let conv_w = params.tensor(&format!("film.{stage}.{part}_conv.w"));
            let (g_feat, gw, gb) =
                conv1d_same_backward(feat, channels, len, &conv_w.data, channels, 1, g_part);
            add_into(&mut grads, &format!("film.{stage}.{part}_conv.w"), &conv_w.shape, gw);
            add_into(&mut grads, &format!("film.{stage}.{part}_conv.b"), &[channels], gb);
            for (acc, g) in grad_down_acts[stages - stage].iter_mut().zip(g_feat) {
                *acc += g;
            }
            let channel_sums: Vec<f64> = (0..channels)
                .map(|c| g_part[c * len..(c + 1) * len].iter().sum())
                .collect();
            let nl_w = params.tensor(&format!("film.{stage}.{part}_nl.w"));
            let (g_nl_contrib, gw, gb) =
                linear_backward(&ws.nl, &nl_w.data, channels, &channel_sums);
            add_into(&mut grads, &format!("film.{stage}.{part}_nl.w"), &nl_w.shape, gw);
            add_into(&mut grads, &format!("film.{stage}.{part}_nl.b"), &[channels], gb);
            for (acc, g) in grad_nl.iter_mut().zip(g_nl_contrib) {
                *acc += g;
            }
        }

        if stage == 0 {
            // conditioning input conv; feature gradients are not needed
            let ci_w = params.tensor("cond_in.w");
            let (_gc, gw, gb) = conv1d_same_backward(
                &ws.cond_mat,
                config.feature_dim,
                frames,
                &ci_w.data,
                channels,
                3,
                &g_pre,
            );
            add_into(&mut grads, "cond_in.w", &ci_w.shape, gw);
            add_into(&mut grads, "cond_in.b", &[channels], gb);
        } else {
            let w = params.tensor(&format!("up.{stage}.w"));
            let factor = config.upsample_factors[stage - 1];
            let prev_len = ws.lens[stages - stage + 1];
            let (g_prev_u, gw, gb) = conv1d_transposed_backward(
                &ws.stage_u[stage - 1],
                channels,
                prev_len,
                &w.data,
                channels,
                factor,
                &g_pre,
            );
            add_into(&mut grads, &format!("up.{stage}.w"), &w.shape, gw);
            add_into(&mut grads, &format!("up.{stage}.b"), &[channels], gb);
            grad_u = g_prev_u;
        }
    }

    // noise-level MLP
    let m2_w = params.tensor("nl.mlp2.w");
    let (g_hidden_silu, gw, gb) =
        linear_backward(&ws.nl_hidden_silu, &m2_w.data, config.noise_embed_dim, &grad_nl);
    add_into(&mut grads, "nl.mlp2.w", &m2_w.shape, gw);
    add_into(&mut grads, "nl.mlp2.b", &[config.noise_embed_dim], gb);
    let g_hidden: Vec<f64> = g_hidden_silu
        .iter()
        .zip(&ws.nl_hidden)
        .map(|(&g, &h)| g * silu_grad(h))
        .collect();
    let m1_w = params.tensor("nl.mlp1.w");
    let (_g_raw, gw, gb) =
        linear_backward(&ws.nl_raw, &m1_w.data, config.noise_embed_dim, &g_hidden);
    add_into(&mut grads, "nl.mlp1.w", &m1_w.shape, gw);
    add_into(&mut grads, "nl.mlp1.b", &[config.noise_embed_dim], gb);

    // waveform branch, deepest stage first
    let strides = config.down_strides();
    for i in (0..stages).rev() {
        let g = strides[i];
        let grad_a = std::mem::take(&mut grad_down_acts[i + 1]);
        let w = params.tensor(&format!("down.{i}.w"));
        let (g_h, gw, gb) = conv1d_strided_backward(
            &ws.down_silu_in[i],
            channels,
            ws.lens[i],
            &w.data,
            channels,
            2 * g,
            g,
            g / 2,
            &grad_a,
        );
        add_into(&mut grads, &format!("down.{i}.w"), &w.shape, gw);
        add_into(&mut grads, &format!("down.{i}.b"), &[channels], gb);
        for ((acc, g_h_v), &a_v) in grad_down_acts[i]
            .iter_mut()
            .zip(g_h)
            .zip(&ws.down_acts[i])
        {
            *acc += g_h_v * silu_grad(a_v);
        }
    }
    let in_w = params.tensor("in_conv.w");
    let (_gx, gw, gb) = conv1d_same_backward(
        &ws.x_noisy,
        1,
        ws.lens[0],
        &in_w.data,
        channels,
        5,
        &grad_down_acts[0],
    );
    add_into(&mut grads, "in_conv.w", &in_w.shape, gw);
    add_into(&mut grads, "in_conv.b", &[channels], gb);

    grads
}

/// Per-example loss and gradient of the L1 noise-prediction objective.
/// The subgradient of `|r|` at `r = 0` is taken as 0.
pub(crate) fn example_loss_and_grads(
    params: &DenoiserParams,
    example: &TrainingExample,
) -> Result<(f64, GradientSet)> {
    let x_noisy = forward_diffuse(&example.x0, example.level, &example.epsilon)?;
    let ws = forward_cached(params, &x_noisy, &example.cond, example.level.sqrt_alpha_bar)?;
    let n = example.epsilon.len() as f64;
    let mut loss = 0.0;
    let grad_out: Vec<f64> = example
        .epsilon
        .iter()
        .zip(&ws.output)
        .map(|(&e, &p)| {
            let r = e - p;
            loss += r.abs();
            // d|e - p|/dp
            if r > 0.0 {
                -1.0 / n
            } else if r < 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    loss /= n;
    let grads = backward(params, &ws, &grad_out);
    Ok((loss, grads))
}

/// Mean loss and mean exact gradients over a batch. Examples are evaluated
/// in parallel; the reduction order is fixed so results are reproducible.
pub fn backprop_gradients(
    params: &DenoiserParams,
    batch: &[TrainingExample],
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(DwaveError::InvalidArgument("empty batch".into()));
    }
    let per_example: Vec<Result<(f64, GradientSet)>> = batch
        .par_iter()
        .map(|ex| example_loss_and_grads(params, ex))
        .collect();
    let mut total_loss = 0.0;
    let mut acc: Option<GradientSet> = None;
    for item in per_example {
        let (loss, grads) = item?;
        total_loss += loss;
        match &mut acc {
            None => acc = Some(grads),
            Some(acc) => {
                for (name, tensor) in acc.iter_mut() {
                    for (a, g) in tensor.data.iter_mut().zip(&grads[name].data) {
                        *a += g;
                    }
                }
            }
        }
    }
    let mut acc = acc.expect("non-empty batch");
    let scale = 1.0 / batch.len() as f64;
    for tensor in acc.values_mut() {
        for g in tensor.data.iter_mut() {
            *g *= scale;
        }
    }
    Ok((total_loss * scale, acc))
}

/// Borrowed view of trained parameters usable by the samplers.
#[derive(Clone, Copy)]
pub struct DenoiserModel<'a> {
    params: &'a DenoiserParams,
}

impl<'a> DenoiserModel<'a> {
    pub fn new(params: &'a DenoiserParams) -> Self {
        DenoiserModel { params }
    }

    pub fn params(&self) -> &DenoiserParams {
        self.params
    }
}

impl NoisePredictor for DenoiserModel<'_> {
    fn samples_per_frame(&self) -> usize {
        self.params.config().samples_per_frame()
    }

    fn predict_noise(
        &self,
        x_noisy: &[f64],
        cond: &FeatureSequence,
        sqrt_alpha_bar: f64,
    ) -> Result<Vec<f64>> {
        denoise(self.params, x_noisy, cond, sqrt_alpha_bar)
    }
}

#[allow(unused)]
fn _config_doc(_c: &DenoiserConfig) {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::ConditionView;
    use crate::diffusion::NoiseLevel;
    use crate::rng::Prng;

    fn tiny_cond(frames: usize, dim: usize, seed: u64) -> FeatureSequence {
        let mut rng = Prng::seed_from_u64(seed);
        FeatureSequence::new(
            rng.standard_normal_vec(frames * dim),
            dim,
            25.0,
            ConditionView::A,
            "t",
        )
        .unwrap()
    }

    #[test]
    fn output_length_matches_input_length() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init_all_random(&config, 1).unwrap();
        let cond = tiny_cond(5, 6, 2);
        let mut rng = Prng::seed_from_u64(3);
        let x = rng.standard_normal_vec(4 * 5);
        let out = denoise(&params, &x, &cond, 0.7).unwrap();
        assert_eq!(out.len(), x.len());
    }

    #[test]
    fn default_config_length_is_640_per_frame() {
        // 24 frames at factors (5,4,4,2,2,2) means 15360 samples in and out.
        let config = DenoiserConfig {
            base_channels: 4,
            noise_embed_dim: 8,
            feature_dim: 8,
            ..DenoiserConfig::default()
        };
        let params = DenoiserParams::init_all_random(&config, 1).unwrap();
        let cond = tiny_cond(24, 8, 5);
        let mut rng = Prng::seed_from_u64(6);
        let x = rng.standard_normal_vec(640 * 24);
        assert_eq!(x.len(), 15360);
        let out = denoise(&params, &x, &cond, 0.5).unwrap();
        assert_eq!(out.len(), 15360);
    }

    #[test]
    fn zero_output_layer_gives_zero_prediction() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 9).unwrap();
        let cond = tiny_cond(4, 6, 7);
        let mut rng = Prng::seed_from_u64(8);
        let x = rng.standard_normal_vec(4 * 4);
        let out = denoise(&params, &x, &cond, 0.9).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_pure() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init_all_random(&config, 11).unwrap();
        let cond = tiny_cond(6, 6, 12);
        let mut rng = Prng::seed_from_u64(13);
        let x = rng.standard_normal_vec(4 * 6);
        let a = denoise(&params, &x, &cond, 0.42).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let params = params.clone();
                let cond = cond.clone();
                let x = x.clone();
                std::thread::spawn(move || denoise(&params, &x, &cond, 0.42).unwrap())
            })
            .collect();
        for h in handles {
            let b = h.join().unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn forward_rejects_shape_mismatches() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 0).unwrap();
        let cond = tiny_cond(4, 6, 1);
        assert!(denoise(&params, &[0.0; 10], &cond, 0.5).is_err());
        let wide = tiny_cond(4, 7, 1);
        assert!(denoise(&params, &[0.0; 16], &wide, 0.5).is_err());
        assert!(denoise(&params, &[0.0; 16], &cond, 0.0).is_err());
    }

    #[test]
    fn upsample_condition_stage_lengths() {
        let cond = tiny_cond(24, 3, 0);
        let stages = upsample_condition(&cond, &[5, 4, 4, 2, 2, 2]).unwrap();
        let lens: Vec<usize> = stages.iter().map(|s| s.len() / 3).collect();
        assert_eq!(lens, vec![120, 480, 1920, 3840, 7680, 15360]);
        let identity = upsample_condition(&cond, &[1]).unwrap();
        assert_eq!(identity[0].len() / 3, 24);
        assert!(upsample_condition(&cond, &[2, 0]).is_err());
    }

    #[test]
    fn perfect_predictor_residual_gives_zero_gradients() {
        // zero-init output layer predicts 0 everywhere; epsilon = 0 makes
        // the residual zero, and the subgradient convention keeps every
        // gradient at exactly 0.
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 21).unwrap();
        let cond = tiny_cond(4, 6, 22);
        let mut rng = Prng::seed_from_u64(23);
        let example = TrainingExample {
            x0: rng.standard_normal_vec(16),
            cond,
            level: NoiseLevel::continuous(0.8),
            epsilon: vec![0.0; 16],
        };
        let (loss, grads) = backprop_gradients(&params, &[example]).unwrap();
        assert_eq!(loss, 0.0);
        for (name, t) in &grads {
            assert!(t.data.iter().all(|&g| g == 0.0), "gradient {name} not zero");
        }
    }

    #[test]
    fn duplicated_batch_leaves_gradients_unchanged() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init_all_random(&config, 31).unwrap();
        let cond = tiny_cond(4, 6, 32);
        let mut rng = Prng::seed_from_u64(33);
        let example = TrainingExample {
            x0: rng.standard_normal_vec(16),
            cond,
            level: NoiseLevel::continuous(0.6),
            epsilon: rng.standard_normal_vec(16),
        };
        let (loss1, g1) = backprop_gradients(&params, &[example.clone()]).unwrap();
        let (loss2, g2) =
            backprop_gradients(&params, &[example.clone(), example]).unwrap();
        assert!((loss1 - loss2).abs() < 1e-15);
        for (name, t) in &g1 {
            for (a, b) in t.data.iter().zip(&g2[name].data) {
                assert!((a - b).abs() < 1e-15, "{name}");
            }
        }
    }

    #[test]
    fn backprop_rejects_empty_batch() {
        let config = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&config, 0).unwrap();
        assert!(backprop_gradients(&params, &[]).is_err());
    }

    #[test]
    fn non_finite_activation_names_the_layer() {
        let config = DenoiserConfig::tiny_reference();
        let mut params = DenoiserParams::init_all_random(&config, 41).unwrap();
        params.tensor_mut("down.1.w").unwrap().data[0] = f64::INFINITY;
        let cond = tiny_cond(4, 6, 42);
        let mut rng = Prng::seed_from_u64(43);
        let x = rng.standard_normal_vec(16);
        let err = denoise(&params, &x, &cond, 0.5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("down.1"), "{msg}");
    }
}
