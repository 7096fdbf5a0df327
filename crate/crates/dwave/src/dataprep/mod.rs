//! Corpus machinery: manifest records, SNR-controlled mixing, the SI-SDR
//! metric, and quality-threshold filtering.

mod manifest;
mod metrics;
mod mixing;

pub use manifest::{filter_manifest, read_manifest, write_manifest, FilterReport};
pub use metrics::{log_mel_distance, si_sdr};
pub use mixing::{measured_snr, mix_at_snr, sample_snr, MixOutput};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, Waveform};
use crate::conditioning::ConditionView;
use crate::error::{DwaveError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfererKind {
    None,
    Speech,
    Noise,
}

/// One manifest entry: audio paths, optional per-view feature paths,
/// cached quality score, and interferer metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub clean_audio_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed_audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_paths: Option<BTreeMap<ConditionView, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
    pub interferer_kind: InterfererKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub duration_s: f64,
}

impl UtteranceRecord {
    pub fn clean(id: impl Into<String>, path: impl Into<String>, duration_s: f64) -> Self {
        UtteranceRecord {
            id: id.into(),
            clean_audio_path: path.into(),
            mixed_audio_path: None,
            feature_paths: None,
            quality_score: None,
            interferer_kind: InterfererKind::None,
            snr_db: None,
            duration_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(DwaveError::Manifest("empty utterance id".into()));
        }
        if self.clean_audio_path.is_empty() {
            return Err(DwaveError::Manifest(format!("{}: empty clean_audio_path", self.id)));
        }
        if let Some(p) = &self.mixed_audio_path {
            if p.is_empty() {
                return Err(DwaveError::Manifest(format!("{}: empty mixed_audio_path", self.id)));
            }
        }
        if let Some(map) = &self.feature_paths {
            if map.values().any(|p| p.is_empty()) {
                return Err(DwaveError::Manifest(format!("{}: empty feature path", self.id)));
            }
        }
        match (self.interferer_kind, self.snr_db) {
            (InterfererKind::None, Some(_)) => Err(DwaveError::Manifest(format!(
                "{}: snr_db set without an interferer",
                self.id
            ))),
            (InterfererKind::Speech | InterfererKind::Noise, None) => Err(DwaveError::Manifest(
                format!("{}: interferer without snr_db", self.id),
            )),
            _ => Ok(()),
        }
    }

    /// Path fields are stored relative to the manifest file.
    pub fn resolve(&self, base: &Path, stored: &str) -> PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

/// Reference-free or reference-based quality scoring in dB.
pub trait QualityEstimator: Sync {
    fn name(&self) -> &'static str;

    /// Score a waveform; `reference` is required by pair-based estimators.
    fn score(&self, waveform: &Waveform, reference: Option<&Waveform>) -> Result<f64>;
}

/// Reference-based scoring: SI-SDR of the utterance against its clean
/// reference.
pub struct OraclePair;

impl QualityEstimator for OraclePair {
    fn name(&self) -> &'static str {
        "oracle-pair"
    }

    fn score(&self, waveform: &Waveform, reference: Option<&Waveform>) -> Result<f64> {
        let reference = reference.ok_or_else(|| {
            DwaveError::InvalidArgument("oracle-pair estimator needs a reference".into())
        })?;
        si_sdr(&waveform.samples, &reference.samples)
    }
}

/// Reference-free proxy: tonal/structured audio has low spectral flatness,
/// broadband noise pushes flatness toward 1. The score is
/// `-10 log10(median flatness)`, loosely dB-like.
pub struct EnergyHeuristic;

impl EnergyHeuristic {
    fn frame_flatness(frame: &[f64]) -> f64 {
        let n = frame.len();
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> = frame
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let phase = std::f64::consts::PI * i as f64 / n as f64;
                rustfft::num_complex::Complex::new(v * phase.sin() * phase.sin(), 0.0)
            })
            .collect();
        let mut planner = rustfft::FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let power: Vec<f64> = buf[1..n / 2].iter().map(|c| c.norm_sqr() + 1e-20).collect();
        let log_mean: f64 = power.iter().map(|p| p.ln()).sum::<f64>() / power.len() as f64;
        let mean: f64 = power.iter().sum::<f64>() / power.len() as f64;
        log_mean.exp() / mean
    }
}

impl QualityEstimator for EnergyHeuristic {
    fn name(&self) -> &'static str {
        "energy-heuristic"
    }

    fn score(&self, waveform: &Waveform, _reference: Option<&Waveform>) -> Result<f64> {
        if waveform.is_empty() {
            return Err(DwaveError::InvalidArgument("empty waveform".into()));
        }
        let window = 512usize;
        let hop = 256usize;
        let mut padded = waveform.samples.clone();
        if padded.len() < window {
            padded.resize(window, 0.0);
        }
        let mut flatness: Vec<f64> = (0..=(padded.len() - window) / hop)
            .map(|i| Self::frame_flatness(&padded[i * hop..i * hop + window]))
            .collect();
        flatness.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = flatness[flatness.len() / 2];
        Ok((-10.0 * median.log10()).clamp(-10.0, 100.0))
    }
}

/// Score a record's audio (the mixed side when present, else the clean
/// side) and cache the result on the record. Pair-based estimators use the
/// clean side as reference and require a distinct mixed side.
pub fn estimate_quality(
    record: &mut UtteranceRecord,
    estimator: &dyn QualityEstimator,
    manifest_dir: &Path,
) -> Result<f64> {
    let clean = read_wav(record.resolve(manifest_dir, &record.clean_audio_path))?;
    let score = match &record.mixed_audio_path {
        Some(mixed_path) => {
            let mixed = read_wav(record.resolve(manifest_dir, mixed_path))?;
            estimator.score(&mixed, Some(&clean))?
        }
        None => estimator.score(&clean, None)?,
    };
    record.quality_score = Some(score);
    Ok(score)
}
