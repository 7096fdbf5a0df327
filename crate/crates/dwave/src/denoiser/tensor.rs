//! Named f64 tensors and the 1-D convolution primitives the denoiser is
//! built from. Activations are stored channel-major: `data[c * len + t]`.

use serde::{Deserialize, Serialize};

use crate::error::{DwaveError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn from_data(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn check_finite(name: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DwaveError::NonFinite { context: format!("layer {name}") })
    }
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub fn silu_slice(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| silu(v)).collect()
}

/// Same-length convolution, stride 1, odd kernel, symmetric zero padding.
/// Weights are `[out_ch, in_ch, k]`. The 1-tap and 3-tap kernels the model
/// leans on get fused single-pass loops.
pub fn conv1d_same(
    input: &[f64],
    in_ch: usize,
    len: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
) -> Vec<f64> {
    let pad = (k - 1) / 2;
    let mut out = vec![0.0; out_ch * len];
    for o in 0..out_ch {
        let out_row = &mut out[o * len..(o + 1) * len];
        out_row.fill(bias[o]);
        for i in 0..in_ch {
            let in_row = &input[i * len..(i + 1) * len];
            let w_base = (o * in_ch + i) * k;
            match k {
                1 => {
                    let w = weights[w_base];
                    for (dst, &s) in out_row.iter_mut().zip(in_row) {
                        *dst += w * s;
                    }
                }
                3 => {
                    let (w0, w1, w2) =
                        (weights[w_base], weights[w_base + 1], weights[w_base + 2]);
                    out_row[0] += w1 * in_row[0];
                    if len > 1 {
                        out_row[0] += w2 * in_row[1];
                        out_row[len - 1] += w0 * in_row[len - 2];
                    }
                    out_row[len - 1] += w1 * in_row[len - 1];
                    for t in 1..len - 1 {
                        out_row[t] +=
                            w0 * in_row[t - 1] + w1 * in_row[t] + w2 * in_row[t + 1];
                    }
                }
                _ => {
                    for j in 0..k {
                        let w = weights[w_base + j];
                        if w == 0.0 {
                            continue;
                        }
                        let shift = j as isize - pad as isize;
                        let t0 = (-shift).max(0) as usize;
                        let t1 = ((len as isize - shift).min(len as isize)).max(0) as usize;
                        let src = &in_row
                            [(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                        for (dst, &s) in out_row[t0..t1].iter_mut().zip(src) {
                            *dst += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of `conv1d_same` with respect to input, weights, and bias.
pub fn conv1d_same_backward(
    input: &[f64],
    in_ch: usize,
    len: usize,
    weights: &[f64],
    out_ch: usize,
    k: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pad = (k - 1) / 2;
    let mut grad_in = vec![0.0; in_ch * len];
    let mut grad_w = vec![0.0; out_ch * in_ch * k];
    let mut grad_b = vec![0.0; out_ch];
    for o in 0..out_ch {
        let go_row = &grad_out[o * len..(o + 1) * len];
        grad_b[o] = go_row.iter().sum();
        for i in 0..in_ch {
            let in_row = &input[i * len..(i + 1) * len];
            let gi_row = &mut grad_in[i * len..(i + 1) * len];
            let w_base = (o * in_ch + i) * k;
            for j in 0..k {
                let shift = j as isize - pad as isize;
                let t0 = (-shift).max(0) as usize;
                let t1 = ((len as isize - shift).min(len as isize)).max(0) as usize;
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + shift) as usize;
                let s1 = (t1 as isize + shift) as usize;
                let mut acc = 0.0;
                for (g, &s) in go_row[t0..t1].iter().zip(&in_row[s0..s1]) {
                    acc += g * s;
                }
                grad_w[w_base + j] = acc;
                let w = weights[w_base + j];
                if w != 0.0 {
                    for (gi, &g) in gi_row[s0..s1].iter_mut().zip(&go_row[t0..t1]) {
                        *gi += w * g;
                    }
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

/// Strided convolution with output length `in_len / stride` (requires an
/// exact multiple). Kernel window for output `t` starts at
/// `t * stride - pad_left`.
pub fn conv1d_strided(
    input: &[f64],
    in_ch: usize,
    in_len: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    pad_left: usize,
) -> Vec<f64> {
    debug_assert_eq!(in_len % stride, 0);
    let out_len = in_len / stride;
    let mut out = vec![0.0; out_ch * out_len];
    // interior outputs whose kernel window stays inside the input
    let t_lo = pad_left.div_ceil(stride).min(out_len);
    let t_hi = if in_len + pad_left >= k {
        (((in_len + pad_left - k) / stride) + 1).min(out_len)
    } else {
        0
    }
    .max(t_lo);
    for o in 0..out_ch {
        let out_row = &mut out[o * out_len..(o + 1) * out_len];
        out_row.fill(bias[o]);
        for i in 0..in_ch {
            let in_row = &input[i * in_len..(i + 1) * in_len];
            let w = &weights[(o * in_ch + i) * k..(o * in_ch + i + 1) * k];
            for (t, dst) in out_row[t_lo..t_hi].iter_mut().enumerate() {
                let base = (t_lo + t) * stride - pad_left;
                let window = &in_row[base..base + k];
                let mut acc = 0.0;
                for (wj, &s) in w.iter().zip(window) {
                    acc += wj * s;
                }
                *dst += acc;
            }
            for t in (0..t_lo).chain(t_hi..out_len) {
                let start = t * stride;
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let src = start + j;
                    if src < pad_left {
                        continue;
                    }
                    let src = src - pad_left;
                    if src >= in_len {
                        break;
                    }
                    acc += wj * in_row[src];
                }
                out_row[t] += acc;
            }
        }
    }
    out
}

pub fn conv1d_strided_backward(
    input: &[f64],
    in_ch: usize,
    in_len: usize,
    weights: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    pad_left: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out_len = in_len / stride;
    let mut grad_in = vec![0.0; in_ch * in_len];
    let mut grad_w = vec![0.0; out_ch * in_ch * k];
    let mut grad_b = vec![0.0; out_ch];
    for o in 0..out_ch {
        let go_row = &grad_out[o * out_len..(o + 1) * out_len];
        grad_b[o] = go_row.iter().sum();
        for i in 0..in_ch {
            let in_row = &input[i * in_len..(i + 1) * in_len];
            let gi_row = &mut grad_in[i * in_len..(i + 1) * in_len];
            let w_base = (o * in_ch + i) * k;
            for (t, &g) in go_row.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let start = t * stride;
                for j in 0..k {
                    let src = start + j;
                    if src < pad_left {
                        continue;
                    }
                    let src = src - pad_left;
                    if src >= in_len {
                        break;
                    }
                    grad_w[w_base + j] += g * in_row[src];
                    gi_row[src] += weights[w_base + j] * g;
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

/// Transposed convolution with kernel `2 * stride`, output length
/// `in_len * stride`. Each output position mixes exactly two kernel taps,
/// and the tap pattern depends on the position modulo the stride, which is
/// what lets the stack synthesize sub-frame structure.
pub fn conv1d_transposed(
    input: &[f64],
    in_ch: usize,
    in_len: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    stride: usize,
) -> Vec<f64> {
    let k = 2 * stride;
    let pad_left = (k - stride) / 2; // = stride / 2
    let out_len = in_len * stride;
    let mut out = vec![0.0; out_ch * out_len];
    for o in 0..out_ch {
        let out_row = &mut out[o * out_len..(o + 1) * out_len];
        out_row.fill(bias[o]);
        for i in 0..in_ch {
            let in_row = &input[i * in_len..(i + 1) * in_len];
            let w = &weights[(o * in_ch + i) * k..(o * in_ch + i + 1) * k];
            for (t, dst) in out_row.iter_mut().enumerate() {
                let tp = t + pad_left;
                let j1 = tp % stride;
                let s1 = tp / stride;
                let mut acc = 0.0;
                if s1 < in_len {
                    acc += w[j1] * in_row[s1];
                }
                if s1 >= 1 {
                    acc += w[j1 + stride] * in_row[s1 - 1];
                }
                *dst += acc;
            }
        }
    }
    out
}

pub fn conv1d_transposed_backward(
    input: &[f64],
    in_ch: usize,
    in_len: usize,
    weights: &[f64],
    out_ch: usize,
    stride: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = 2 * stride;
    let pad_left = (k - stride) / 2;
    let out_len = in_len * stride;
    let mut grad_in = vec![0.0; in_ch * in_len];
    let mut grad_w = vec![0.0; out_ch * in_ch * k];
    let mut grad_b = vec![0.0; out_ch];
    for o in 0..out_ch {
        let go_row = &grad_out[o * out_len..(o + 1) * out_len];
        grad_b[o] = go_row.iter().sum();
        for i in 0..in_ch {
            let in_row = &input[i * in_len..(i + 1) * in_len];
            let gi_row = &mut grad_in[i * in_len..(i + 1) * in_len];
            let w = &weights[(o * in_ch + i) * k..(o * in_ch + i + 1) * k];
            let gw = &mut grad_w[(o * in_ch + i) * k..(o * in_ch + i + 1) * k];
            for (t, &g) in go_row.iter().enumerate() {
                let tp = t + pad_left;
                let j1 = tp % stride;
                let s1 = tp / stride;
                if s1 < in_len {
                    gw[j1] += g * in_row[s1];
                    gi_row[s1] += w[j1] * g;
                }
                if s1 >= 1 {
                    gw[j1 + stride] += g * in_row[s1 - 1];
                    gi_row[s1 - 1] += w[j1 + stride] * g;
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

/// Nearest-neighbour upsampling: each sample repeated `factor` times.
pub fn upsample_nearest(input: &[f64], ch: usize, len: usize, factor: usize) -> Vec<f64> {
    let out_len = len * factor;
    let mut out = vec![0.0; ch * out_len];
    for c in 0..ch {
        let in_row = &input[c * len..(c + 1) * len];
        let out_row = &mut out[c * out_len..(c + 1) * out_len];
        for (t, &v) in in_row.iter().enumerate() {
            out_row[t * factor..(t + 1) * factor].fill(v);
        }
    }
    out
}

pub fn upsample_nearest_backward(
    grad_out: &[f64],
    ch: usize,
    in_len: usize,
    factor: usize,
) -> Vec<f64> {
    let out_len = in_len * factor;
    let mut grad_in = vec![0.0; ch * in_len];
    for c in 0..ch {
        let go_row = &grad_out[c * out_len..(c + 1) * out_len];
        let gi_row = &mut grad_in[c * in_len..(c + 1) * in_len];
        for (t, gi) in gi_row.iter_mut().enumerate() {
            *gi = go_row[t * factor..(t + 1) * factor].iter().sum();
        }
    }
    grad_in
}

/// Dense layer `out = W x + b` with `W` stored `[out_dim, in_dim]`.
pub fn linear(input: &[f64], weights: &[f64], bias: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = input.len();
    (0..out_dim)
        .map(|o| {
            bias[o]
                + weights[o * in_dim..(o + 1) * in_dim]
                    .iter()
                    .zip(input)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
        })
        .collect()
}

pub fn linear_backward(
    input: &[f64],
    weights: &[f64],
    out_dim: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_dim = input.len();
    let mut grad_in = vec![0.0; in_dim];
    let mut grad_w = vec![0.0; out_dim * in_dim];
    for o in 0..out_dim {
        let g = grad_out[o];
        if g == 0.0 {
            continue;
        }
        let w_row = &weights[o * in_dim..(o + 1) * in_dim];
        let gw_row = &mut grad_w[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            gw_row[i] = g * input[i];
            grad_in[i] += g * w_row[i];
        }
    }
    (grad_in, grad_w, grad_out.to_vec())
}
