//! Full-utterance synthesis: long feature sequences are chunked into
//! segment-frame windows with one-frame overlap, synthesized independently,
//! and cross-faded at the seams. Enhancement conditions on the noisy-view
//! features; re-synthesis conditions on a clean-signal view.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{normalize_peak, Waveform};
use crate::conditioning::{
    extract_melproxy_features, layer_normalize, ConditionView, FeatureSequence, MelConfig,
};
use crate::dataprep::{log_mel_distance, si_sdr};
use crate::denoiser::{DenoiserModel, DenoiserParams};
use crate::diffusion::{sample, NoiseSchedule, SamplerConfig};
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub sampler: SamplerConfig,
    pub segment_frames: usize,
}

/// Chunk starts covering `total` frames with windows of `segment` frames
/// overlapping by one frame; the final window is pulled back to end exactly
/// at the sequence end.
fn chunk_starts(total: usize, segment: usize) -> Vec<usize> {
    if total <= segment {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut start = 0;
    loop {
        if start + segment >= total {
            starts.push(total - segment);
            break;
        }
        starts.push(start);
        start += segment - 1;
    }
    starts.dedup();
    starts
}

/// Synthesize a normalized waveform for an entire (layer-normalized)
/// feature sequence. Deterministic given the sampler seed; chunks run in
/// parallel on derived streams.
pub fn synthesize_waveform(
    params: &DenoiserParams,
    features: &FeatureSequence,
    schedule: &NoiseSchedule,
    options: &SynthesisOptions,
) -> Result<Vec<f64>> {
    let spf = params.config().samples_per_frame();
    let segment = options.segment_frames;
    if segment == 0 {
        return Err(DwaveError::InvalidArgument("segment_frames must be >= 1".into()));
    }
    let total = features.frame_count();
    let model = DenoiserModel::new(params);
    let starts = chunk_starts(total, segment);
    let rendered: Vec<Result<(usize, Vec<f64>)>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, &start)| {
            let window = features.slice_frames(start, segment, true)?;
            let mut rng = Prng::derive(
                options.sampler.seed,
                &format!("synth/{}/chunk-{k}", features.utterance_id),
            );
            let chunk = sample(&model, &window, schedule, &options.sampler, &mut rng)?;
            Ok((start, chunk))
        })
        .collect();

    let mut out = vec![0.0; total * spf];
    let mut filled = 0usize;
    for item in rendered {
        let (start, chunk) = item?;
        let offset = start * spf;
        let overlap = filled.saturating_sub(offset);
        for (i, &v) in chunk.iter().enumerate() {
            let pos = offset + i;
            if pos >= out.len() {
                break; // padded tail of a short final window
            }
            if i < overlap {
                // linear cross-fade across the overlapped samples
                let w = (i + 1) as f64 / (overlap + 1) as f64;
                out[pos] = out[pos] * (1.0 - w) + v * w;
            } else {
                out[pos] = v;
            }
        }
        filled = filled.max((offset + chunk.len()).min(out.len()));
    }
    Ok(out)
}

/// Enhance a noisy utterance: featurize the mixed signal (noisy view),
/// synthesize, and restore the mixed signal's level.
pub fn enhance_utterance(
    params: &DenoiserParams,
    mixed: &Waveform,
    mel: &MelConfig,
    schedule: &NoiseSchedule,
    options: &SynthesisOptions,
    utterance_id: &str,
) -> Result<Waveform> {
    let (norm, scale) = normalize_peak(&mixed.samples);
    let features = extract_melproxy_features(
        &Waveform::new(norm, mixed.sample_rate),
        mel,
        ConditionView::Avn,
        utterance_id,
    )?;
    let features = layer_normalize(&features)?;
    let synth = synthesize_waveform(params, &features, schedule, options)?;
    Ok(Waveform::new(
        synth.iter().map(|&v| v * scale).collect(),
        mixed.sample_rate,
    ))
}

/// Re-synthesize from precomputed (clean-view) features, restoring the
/// given output level.
pub fn resynth_from_features(
    params: &DenoiserParams,
    features: &FeatureSequence,
    scale: f64,
    sample_rate: u32,
    schedule: &NoiseSchedule,
    options: &SynthesisOptions,
) -> Result<Waveform> {
    let normalized = layer_normalize(features)?;
    let synth = synthesize_waveform(params, &normalized, schedule, options)?;
    Ok(Waveform::new(
        synth.iter().map(|&v| v * scale).collect(),
        sample_rate,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub si_sdr_db: f64,
    pub log_mel_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_si_sdr_db: f64,
    pub mean_log_mel_distance: f64,
}

/// Per-utterance and corpus-mean SI-SDR and log-mel distance of
/// (estimate, reference) pairs. Lengths are truncated to the shorter side
/// before scoring.
pub fn evaluate_pairs(
    pairs: &[(String, Waveform, Waveform)],
    mel: &MelConfig,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(DwaveError::InvalidArgument("no pairs to evaluate".into()));
    }
    let rows: Vec<Result<EvalRow>> = pairs
        .par_iter()
        .map(|(id, estimate, reference)| {
            let n = estimate.len().min(reference.len());
            if n == 0 {
                return Err(DwaveError::InvalidArgument(format!("{id}: empty audio")));
            }
            Ok(EvalRow {
                id: id.clone(),
                si_sdr_db: si_sdr(&estimate.samples[..n], &reference.samples[..n])?,
                log_mel_distance: log_mel_distance(estimate, reference, mel)?,
            })
        })
        .collect();
    let rows: Result<Vec<EvalRow>> = rows.into_iter().collect();
    let rows = rows?;
    let mean_si_sdr_db = rows.iter().map(|r| r.si_sdr_db).sum::<f64>() / rows.len() as f64;
    let mean_log_mel_distance =
        rows.iter().map(|r| r.log_mel_distance).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport { rows, mean_si_sdr_db, mean_log_mel_distance })
}
