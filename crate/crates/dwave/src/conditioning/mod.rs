//! Conditioning feature sequences: extraction, normalization, segment and
//! view sampling. Features are frame-level (25 Hz at the full-rate preset)
//! and drive the waveform synthesizer at `samples_per_frame` resolution.

mod featbin;
mod melproxy;
mod views;

pub use featbin::{load_precomputed_features, write_features};
pub use melproxy::{extract_melproxy_features, MelConfig};
pub use views::{
    layer_normalize, sample_segment, select_condition_view, synthesize_video_proxy,
    ViewProbabilities,
};

use serde::{Deserialize, Serialize};

use crate::error::{DwaveError, Result};

/// Which input view a feature sequence was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionView {
    /// Audio + video.
    Av,
    /// Audio only.
    A,
    /// Video only.
    V,
    /// Noised audio + video.
    Avn,
}

impl ConditionView {
    pub const ALL: [ConditionView; 4] = [
        ConditionView::Av,
        ConditionView::A,
        ConditionView::V,
        ConditionView::Avn,
    ];

    pub fn tag(self) -> u8 {
        match self {
            ConditionView::Av => 0,
            ConditionView::A => 1,
            ConditionView::V => 2,
            ConditionView::Avn => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ConditionView::Av),
            1 => Some(ConditionView::A),
            2 => Some(ConditionView::V),
            3 => Some(ConditionView::Avn),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionView::Av => "av",
            ConditionView::A => "a",
            ConditionView::V => "v",
            ConditionView::Avn => "avn",
        }
    }
}

/// An `L x F` matrix of frame-level conditioning features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// Row-major frame data, `frame_count * feature_dim` entries.
    data: Vec<f64>,
    feature_dim: usize,
    pub frame_rate: f64,
    pub view: ConditionView,
    pub utterance_id: String,
}

impl FeatureSequence {
    pub fn new(
        data: Vec<f64>,
        feature_dim: usize,
        frame_rate: f64,
        view: ConditionView,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(DwaveError::InvalidArgument("feature_dim must be positive".into()));
        }
        if data.is_empty() || data.len() % feature_dim != 0 {
            return Err(DwaveError::ShapeMismatch(format!(
                "feature data length {} is not a positive multiple of feature_dim {}",
                data.len(),
                feature_dim
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DwaveError::NonFinite { context: "feature sequence".into() });
        }
        Ok(FeatureSequence {
            data,
            feature_dim,
            frame_rate,
            view,
            utterance_id: utterance_id.into(),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.feature_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn frame(&self, index: usize) -> &[f64] {
        &self.data[index * self.feature_dim..(index + 1) * self.feature_dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Extract frames `[start, start + count)`, repeating the last frame when
    /// the sequence is shorter than requested (`pad` must be set for that).
    pub fn slice_frames(&self, start: usize, count: usize, pad: bool) -> Result<FeatureSequence> {
        let total = self.frame_count();
        if !pad && start + count > total {
            return Err(DwaveError::InvalidArgument(format!(
                "segment [{start}, {}) exceeds {total} frames",
                start + count
            )));
        }
        let mut data = Vec::with_capacity(count * self.feature_dim);
        for i in 0..count {
            let src = (start + i).min(total - 1);
            data.extend_from_slice(self.frame(src));
        }
        Ok(FeatureSequence {
            data,
            feature_dim: self.feature_dim,
            frame_rate: self.frame_rate,
            view: self.view,
            utterance_id: self.utterance_id.clone(),
        })
    }

    pub fn with_view(mut self, view: ConditionView) -> Self {
        self.view = view;
        self
    }
}
