//! Log mel-filterbank features framed at the synthesizer hop. This is the
//! built-in stand-in feature extractor; externally computed features come
//! in through the feature container instead.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{DwaveError, Result};

use super::{ConditionView, FeatureSequence};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub hop: usize,
    pub window: usize,
    pub sample_rate: u32,
    /// Lower clamp on the log energies.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 80,
            hop: 640,
            window: 1280,
            sample_rate: 16000,
            log_floor: -10.0,
        }
    }
}

impl MelConfig {
    /// Reduced preset: 8 kHz audio, hop 64 (used with the (4,4,2,2)
    /// upsampling factors).
    pub fn desk_8k(n_mels: usize) -> Self {
        MelConfig {
            n_mels,
            hop: 64,
            window: 128,
            sample_rate: 8000,
            log_floor: -10.0,
        }
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `[0, sample_rate / 2]`.
/// Returns `n_mels` rows of `n_bins` weights.
pub(crate) fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    let mut bank = vec![vec![0.0; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for (b, w) in bank[m].iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            if f > lo && f < hi {
                *w = if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
            }
        }
    }
    bank
}

/// Frame the waveform at `hop`, window each frame (Hann, zero-padded tail),
/// and return log mel energies: exactly `floor(len / hop)` frames. Frame `l`
/// (1-based) is aligned with waveform samples `[(l-1)*hop, l*hop)`.
pub fn extract_melproxy_features(
    waveform: &Waveform,
    config: &MelConfig,
    view: ConditionView,
    utterance_id: impl Into<String>,
) -> Result<FeatureSequence> {
    if waveform.is_empty() {
        return Err(DwaveError::InvalidArgument("empty waveform".into()));
    }
    if waveform.len() < config.window {
        return Err(DwaveError::InvalidArgument(format!(
            "waveform of {} samples is shorter than the {}-sample window",
            waveform.len(),
            config.window
        )));
    }
    let n_frames = waveform.len() / config.hop;
    let n_fft = config.window.next_power_of_two();
    let bank = mel_filterbank(config.n_mels, n_fft, config.sample_rate as f64);
    let hann: Vec<f64> = (0..config.window)
        .map(|i| {
            let phase = std::f64::consts::PI * i as f64 / config.window as f64;
            phase.sin() * phase.sin()
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut data = Vec::with_capacity(n_frames * config.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for frame in 0..n_frames {
        let start = frame * config.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let sample = if i < config.window {
                waveform.samples.get(start + i).copied().unwrap_or(0.0) * hann[i]
            } else {
                0.0
            };
            *slot = Complex::new(sample, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for filt in &bank {
            let energy: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(energy.ln().max(config.log_floor));
        }
    }
    FeatureSequence::new(
        data,
        config.n_mels,
        config.frame_rate(),
        view,
        utterance_id,
    )
}
