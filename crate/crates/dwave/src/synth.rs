//! Synthetic corpus generation: band-limited pseudo-speech whose harmonic
//! period divides the frame hop, so the waveform is phase-locked to the
//! frame grid and fully recoverable from frame-level magnitude features.
//! Used for desk-scale end-to-end runs and tests.

use std::path::Path;

use crate::audio::{write_wav, Waveform};
use crate::dataprep::{InterfererKind, UtteranceRecord};
use crate::error::Result;
use crate::rng::Prng;

#[derive(Debug, Clone)]
pub struct PseudoSpeechConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Broadband floor under the harmonics, dB relative to peak. Real
    /// recordings are never noise-free; a floor also keeps quiet mel bins
    /// off the log clamp.
    pub noise_floor_db: f64,
}

impl PseudoSpeechConfig {
    pub fn desk_8k() -> Self {
        PseudoSpeechConfig {
            sample_rate: 8000,
            hop: 64,
            min_duration_s: 0.55,
            max_duration_s: 0.95,
            noise_floor_db: -24.0,
        }
    }
}

/// Fundamental periods that divide the hop and land in a voice-like range.
fn candidate_periods(sample_rate: u32, hop: usize) -> Vec<usize> {
    (1..=hop)
        .filter(|d| hop % d == 0)
        .filter(|&d| {
            let f0 = sample_rate as f64 / d as f64;
            (80.0..=320.0).contains(&f0)
        })
        .collect()
}

fn harmonic_stack(
    config: &PseudoSpeechConfig,
    f0: f64,
    rng: &mut Prng,
) -> Waveform {
    let sr = config.sample_rate as f64;
    let n_harmonics = rng.uniform_int(3, 5);
    let ratio = rng.uniform(0.55, 0.8);
    let harmonics: Vec<(f64, f64)> = (1..=n_harmonics)
        .map(|h| (h as f64 * f0, ratio.powi(h as i32 - 1)))
        .filter(|&(freq, _)| freq < 0.42 * sr)
        .collect();

    let duration = rng.uniform(config.min_duration_s, config.max_duration_s);
    let frames = ((duration * sr) as usize / config.hop).max(3);
    let mut envelope = Vec::with_capacity(frames + 1);
    let mut level = 0.7f64;
    for _ in 0..=frames {
        envelope.push(level);
        level = (level * (0.3 * rng.standard_normal()).exp()).clamp(0.25, 1.0);
    }

    let len = frames * config.hop;
    let mut samples = Vec::with_capacity(len);
    for t in 0..len {
        // envelope interpolates linearly between frame boundaries; no
        // clicks, and each frame is determined by its own and the next
        // frame's level
        let frame = t / config.hop;
        let within = (t % config.hop) as f64 / config.hop as f64;
        let env = envelope[frame] * (1.0 - within) + envelope[frame + 1] * within;
        let mut v = 0.0;
        for &(freq, amp) in &harmonics {
            v += amp * (2.0 * std::f64::consts::PI * freq * t as f64 / sr).sin();
        }
        samples.push(env * v);
    }
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = 0.85 / peak;
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }
    let floor = 0.85 * 10f64.powf(config.noise_floor_db / 20.0);
    for s in samples.iter_mut() {
        *s += floor * rng.standard_normal();
    }
    Waveform::new(samples, config.sample_rate)
}

/// One pseudo-speech utterance: a harmonic stack whose fundamental period
/// divides the hop (phase-locked to the frame grid) with a slowly varying
/// amplitude envelope.
pub fn pseudo_speech(config: &PseudoSpeechConfig, rng: &mut Prng) -> Waveform {
    let periods = candidate_periods(config.sample_rate, config.hop);
    assert!(!periods.is_empty(), "hop admits no voice-like period");
    let period = periods[rng.uniform_int(0, periods.len() - 1)];
    let f0 = config.sample_rate as f64 / period as f64;
    harmonic_stack(config, f0, rng)
}

/// A competing-speaker interferer: same texture as [`pseudo_speech`] but
/// with a continuous fundamental, so its harmonics do not collide
/// coherently with a frame-locked target.
pub fn pseudo_speech_interferer(config: &PseudoSpeechConfig, rng: &mut Prng) -> Waveform {
    let f0 = rng.uniform(85.0, 240.0);
    harmonic_stack(config, f0, rng)
}

/// Broadband noise interferer.
pub fn noise_interferer(sample_rate: u32, duration_s: f64, rng: &mut Prng) -> Waveform {
    let len = (duration_s * sample_rate as f64) as usize;
    let samples: Vec<f64> = (0..len).map(|_| 0.35 * rng.standard_normal()).collect();
    Waveform::new(samples, sample_rate)
}

/// Write `count` clean pseudo-speech utterances under `dir/audio` and
/// return their manifest records (id prefixed, paths relative to `dir`).
pub fn build_clean_corpus(
    dir: &Path,
    prefix: &str,
    count: usize,
    config: &PseudoSpeechConfig,
    seed: u64,
) -> Result<Vec<UtteranceRecord>> {
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("{prefix}-{i:04}");
        let mut rng = Prng::derive(seed, &id);
        let wav = pseudo_speech(config, &mut rng);
        let rel = format!("audio/{id}.wav");
        write_wav(dir.join(&rel), &wav)?;
        let mut record = UtteranceRecord::clean(&id, rel, wav.duration_s());
        record.quality_score = Some(40.0); // synthetic studio-clean
        records.push(record);
    }
    Ok(records)
}

/// Interferer pool: half broadband noise, half competing pseudo-speech.
pub fn build_interferer_pool(
    config: &PseudoSpeechConfig,
    count: usize,
    seed: u64,
) -> Vec<(InterfererKind, Waveform)> {
    (0..count)
        .map(|i| {
            let mut rng = Prng::derive(seed, &format!("interferer-{i:04}"));
            if i % 2 == 0 {
                (
                    InterfererKind::Noise,
                    noise_interferer(config.sample_rate, config.max_duration_s, &mut rng),
                )
            } else {
                (InterfererKind::Speech, pseudo_speech_interferer(config, &mut rng))
            }
        })
        .collect()
}
