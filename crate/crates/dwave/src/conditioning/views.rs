//! Frame normalization, segment sampling, and the four-view conditioning
//! mixture.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::{ConditionView, FeatureSequence};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-frame normalization: subtract the frame mean, divide by
/// `sqrt(population variance + 1e-5)`. No learned affine.
pub fn layer_normalize(features: &FeatureSequence) -> Result<FeatureSequence> {
    let dim = features.feature_dim();
    if dim < 2 {
        return Err(DwaveError::InvalidArgument(
            "layer normalization needs feature_dim >= 2".into(),
        ));
    }
    let mut data = Vec::with_capacity(features.data().len());
    for i in 0..features.frame_count() {
        let frame = features.frame(i);
        let mean: f64 = frame.iter().sum::<f64>() / dim as f64;
        let var: f64 = frame.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let denom = (var + LAYER_NORM_EPS).sqrt();
        data.extend(frame.iter().map(|&v| (v - mean) / denom));
    }
    FeatureSequence::new(
        data,
        dim,
        features.frame_rate,
        features.view,
        features.utterance_id.clone(),
    )
}

/// Uniform 1-based segment start on `{1, ..., L - S + 1}`.
pub fn sample_segment(total_frames: usize, segment_frames: usize, rng: &mut Prng) -> Result<usize> {
    if segment_frames == 0 {
        return Err(DwaveError::InvalidArgument("segment length must be positive".into()));
    }
    if total_frames < segment_frames {
        return Err(DwaveError::InvalidArgument(format!(
            "utterance of {total_frames} frames is shorter than the {segment_frames}-frame segment"
        )));
    }
    Ok(rng.uniform_int(1, total_frames - segment_frames + 1))
}

/// Mixture weights over the four conditioning views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewProbabilities {
    pub p_av: f64,
    pub p_a: f64,
    pub p_v: f64,
    pub p_avn: f64,
}

impl ViewProbabilities {
    pub fn new(p_av: f64, p_a: f64, p_v: f64, p_avn: f64) -> Result<Self> {
        let probs = ViewProbabilities { p_av, p_a, p_v, p_avn };
        probs.validate()?;
        Ok(probs)
    }

    /// Stage-1 vocoding mixture: (1/3, 1/3, 1/3, 0).
    pub fn vocode() -> Self {
        ViewProbabilities {
            p_av: 1.0 / 3.0,
            p_a: 1.0 / 3.0,
            p_v: 1.0 / 3.0,
            p_avn: 0.0,
        }
    }

    /// Stage-2 clean/noisy pair mixture: (0, 0, 0, 1).
    pub fn finetune_pairs() -> Self {
        ViewProbabilities { p_av: 0.0, p_a: 0.0, p_v: 0.0, p_avn: 1.0 }
    }

    /// Clean-audio fine-tuning mixture: (0, 1, 0, 0).
    pub fn finetune_clean_audio() -> Self {
        ViewProbabilities { p_av: 0.0, p_a: 1.0, p_v: 0.0, p_avn: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let entries = self.entries();
        if entries.iter().any(|&(_, p)| p < 0.0 || !p.is_finite()) {
            return Err(DwaveError::InvalidArgument(
                "view probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DwaveError::InvalidArgument(format!(
                "view probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> [(ConditionView, f64); 4] {
        [
            (ConditionView::Av, self.p_av),
            (ConditionView::A, self.p_a),
            (ConditionView::V, self.p_v),
            (ConditionView::Avn, self.p_avn),
        ]
    }

    pub fn probability(&self, view: ConditionView) -> f64 {
        match view {
            ConditionView::Av => self.p_av,
            ConditionView::A => self.p_a,
            ConditionView::V => self.p_v,
            ConditionView::Avn => self.p_avn,
        }
    }
}

/// Categorical draw over the available views. Every view with positive
/// probability must be present in the map.
pub fn select_condition_view<'a>(
    views: &'a BTreeMap<ConditionView, FeatureSequence>,
    probs: &ViewProbabilities,
    rng: &mut Prng,
) -> Result<(ConditionView, &'a FeatureSequence)> {
    probs.validate()?;
    for (view, p) in probs.entries() {
        if p > 0.0 && !views.contains_key(&view) {
            return Err(DwaveError::InvalidArgument(format!(
                "view {} has probability {p} but no features",
                view.name()
            )));
        }
    }
    let u = rng.uniform(0.0, 1.0);
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (view, p) in probs.entries() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        chosen = Some(view);
        if u < cumulative {
            break;
        }
    }
    let view = chosen.expect("probabilities sum to 1, at least one is positive");
    Ok((view, &views[&view]))
}

/// Fixed-seed low-rank projection of the audio view: a weaker channel that
/// stands in for lip-only features in the desk pipeline.
pub fn synthesize_video_proxy(audio_view: &FeatureSequence, seed: u64) -> FeatureSequence {
    let dim = audio_view.feature_dim();
    let rank = (dim / 4).max(1);
    let mut rng = Prng::derive(seed, "video-proxy-projection");
    let down: Vec<f64> = (0..rank * dim)
        .map(|_| rng.standard_normal() / (dim as f64).sqrt())
        .collect();
    let up: Vec<f64> = (0..dim * rank)
        .map(|_| rng.standard_normal() / (rank as f64).sqrt())
        .collect();
    let mut data = Vec::with_capacity(audio_view.data().len());
    let mut hidden = vec![0.0; rank];
    for i in 0..audio_view.frame_count() {
        let frame = audio_view.frame(i);
        for (r, h) in hidden.iter_mut().enumerate() {
            *h = down[r * dim..(r + 1) * dim]
                .iter()
                .zip(frame)
                .map(|(w, v)| w * v)
                .sum();
        }
        for f in 0..dim {
            let v: f64 = up[f * rank..(f + 1) * rank]
                .iter()
                .zip(&hidden)
                .map(|(w, h)| w * h)
                .sum();
            data.push(v);
        }
    }
    FeatureSequence::new(
        data,
        dim,
        audio_view.frame_rate,
        ConditionView::V,
        audio_view.utterance_id.clone(),
    )
    .expect("projection of finite input is finite")
}
