//! In-memory training corpus: normalized waveforms plus the layer-normalized
//! conditioning views each stage needs. Only views with positive mixture
//! probability are materialized, so a pairs-only stage never touches the
//! clean-signal views.

use std::collections::BTreeMap;
use std::path::Path;

use crate::audio::{normalize_peak, read_wav, Waveform};
use crate::conditioning::{
    extract_melproxy_features, layer_normalize, load_precomputed_features,
    synthesize_video_proxy, ConditionView, FeatureSequence, MelConfig,
};
use crate::dataprep::{InterfererKind, UtteranceRecord};
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

#[derive(Debug, Clone)]
pub struct LoadedUtterance {
    pub id: String,
    /// Unnormalized samples, used when remixing interferers on the fly.
    pub clean_raw: Vec<f64>,
    /// Peak-normalized samples; the regression target.
    pub clean_norm: Vec<f64>,
    pub norm_scale: f64,
    pub sample_rate: u32,
    pub hop: usize,
    /// Usable frame count (min across audio and feature sources).
    pub frames: usize,
    pub interferer_kind: InterfererKind,
    views: BTreeMap<ConditionView, FeatureSequence>,
}

impl LoadedUtterance {
    pub fn views(&self) -> &BTreeMap<ConditionView, FeatureSequence> {
        &self.views
    }

    /// Clean waveform samples for frames `[start, start + count)` (1-based
    /// start). Frames past the end repeat the final frame's samples, in
    /// lockstep with feature-side padding.
    pub fn target_segment(&self, start_1b: usize, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count * self.hop);
        for i in 0..count {
            let frame = (start_1b - 1 + i).min(self.frames - 1);
            let a = frame * self.hop;
            out.extend_from_slice(&self.clean_norm[a..a + self.hop]);
        }
        out
    }

    /// Conditioning frames for the same segment, edge-repeated past the end.
    pub fn view_segment(
        &self,
        view: ConditionView,
        start_1b: usize,
        count: usize,
    ) -> Result<FeatureSequence> {
        let features = self.views.get(&view).ok_or_else(|| {
            DwaveError::InvalidArgument(format!(
                "utterance {} has no {} view",
                self.id,
                view.name()
            ))
        })?;
        features.slice_frames(start_1b - 1, count, true)
    }
}

#[derive(Debug)]
pub struct TrainDataset {
    pub utterances: Vec<LoadedUtterance>,
    cumulative_frames: Vec<f64>,
    pub mel: MelConfig,
}

fn mel_view(
    wav: &Waveform,
    mel: &MelConfig,
    view: ConditionView,
    id: &str,
) -> Result<FeatureSequence> {
    let features = extract_melproxy_features(wav, mel, view, id)?;
    layer_normalize(&features)
}

impl TrainDataset {
    /// Load every record, materializing exactly `needed_views`. Views come
    /// from precomputed feature files when the manifest lists them and are
    /// synthesized from audio otherwise (audio view = mel of the clean
    /// signal, noisy view = mel of the mixed signal, video view = low-rank
    /// projection of the audio view).
    pub fn load(
        records: &[UtteranceRecord],
        manifest_dir: &Path,
        mel: &MelConfig,
        needed_views: &[ConditionView],
        video_proxy_seed: u64,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(DwaveError::Manifest("empty manifest".into()));
        }
        let mut utterances = Vec::with_capacity(records.len());
        for record in records {
            record.validate()?;
            let clean = read_wav(record.resolve(manifest_dir, &record.clean_audio_path))?;
            if clean.sample_rate != mel.sample_rate {
                return Err(DwaveError::Audio {
                    path: record.clean_audio_path.clone(),
                    reason: format!(
                        "sample rate {} does not match configured {}",
                        clean.sample_rate, mel.sample_rate
                    ),
                });
            }
            if clean.len() < mel.hop.max(mel.window) {
                return Err(DwaveError::Audio {
                    path: record.clean_audio_path.clone(),
                    reason: "utterance shorter than one frame".into(),
                });
            }
            let (clean_norm, norm_scale) = normalize_peak(&clean.samples);
            let clean_norm_wav = Waveform::new(clean_norm.clone(), clean.sample_rate);
            let mut frames = clean.len() / mel.hop;

            let mixed_norm_wav = match &record.mixed_audio_path {
                Some(p) => {
                    let mixed = read_wav(record.resolve(manifest_dir, p))?;
                    if mixed.sample_rate != clean.sample_rate {
                        return Err(DwaveError::Audio {
                            path: p.clone(),
                            reason: "mixed/clean sample rate mismatch".into(),
                        });
                    }
                    let mixed_frames = mixed.len() / mel.hop;
                    if mixed_frames.abs_diff(frames) > 1 {
                        return Err(DwaveError::Audio {
                            path: p.clone(),
                            reason: format!(
                                "mixed side has {mixed_frames} frames, clean has {frames}; \
                                 misaligned by more than one frame"
                            ),
                        });
                    }
                    frames = frames.min(mixed_frames);
                    let (norm, _) = normalize_peak(&mixed.samples);
                    Some(Waveform::new(norm, mixed.sample_rate))
                }
                None => None,
            };

            let precomputed = record.feature_paths.as_ref();
            let mut views = BTreeMap::new();
            let mut audio_view_cache: Option<FeatureSequence> = None;
            for &view in needed_views {
                if let Some(path) = precomputed.and_then(|m| m.get(&view)) {
                    let loaded =
                        load_precomputed_features(record.resolve(manifest_dir, path))?;
                    let normalized = layer_normalize(&loaded)?.with_view(view);
                    frames = frames.min(normalized.frame_count());
                    views.insert(view, normalized);
                    continue;
                }
                let features = match view {
                    ConditionView::A | ConditionView::Av => {
                        let base = match &audio_view_cache {
                            Some(f) => f.clone(),
                            None => {
                                let f =
                                    mel_view(&clean_norm_wav, mel, ConditionView::A, &record.id)?;
                                audio_view_cache = Some(f.clone());
                                f
                            }
                        };
                        base.with_view(view)
                    }
                    ConditionView::V => {
                        let base = match &audio_view_cache {
                            Some(f) => f.clone(),
                            None => {
                                let f =
                                    mel_view(&clean_norm_wav, mel, ConditionView::A, &record.id)?;
                                audio_view_cache = Some(f.clone());
                                f
                            }
                        };
                        synthesize_video_proxy(&base, video_proxy_seed)
                    }
                    ConditionView::Avn => match &mixed_norm_wav {
                        Some(mixed) => mel_view(mixed, mel, ConditionView::Avn, &record.id)?,
                        // built per draw when mixing on the fly
                        None => continue,
                    },
                };
                frames = frames.min(features.frame_count());
                views.insert(view, features);
            }

            if frames == 0 {
                return Err(DwaveError::Audio {
                    path: record.clean_audio_path.clone(),
                    reason: "utterance shorter than one frame".into(),
                });
            }
            utterances.push(LoadedUtterance {
                id: record.id.clone(),
                clean_raw: clean.samples,
                clean_norm,
                norm_scale,
                sample_rate: clean.sample_rate,
                hop: mel.hop,
                frames,
                interferer_kind: record.interferer_kind,
                views,
            });
        }
        let mut cumulative_frames = Vec::with_capacity(utterances.len());
        let mut acc = 0.0;
        for u in &utterances {
            acc += u.frames as f64;
            cumulative_frames.push(acc);
        }
        Ok(TrainDataset {
            utterances,
            cumulative_frames,
            mel: mel.clone(),
        })
    }

    /// Draw an utterance with probability proportional to its duration.
    pub fn sample_utterance(&self, rng: &mut Prng) -> usize {
        let total = *self.cumulative_frames.last().unwrap();
        let u = rng.uniform(0.0, total);
        self.cumulative_frames.partition_point(|&c| c <= u)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}
