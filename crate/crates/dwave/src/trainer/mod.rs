//! Two-stage training orchestration: stage-1 vocoding on a filtered corpus,
//! stage-2 fine-tuning on clean/noisy pairs, with Adam, warmup-plus-cosine
//! learning rate, and atomic checkpointing.

mod data;
mod optimizer;
mod run;

pub use data::{LoadedUtterance, TrainDataset};
pub use optimizer::{adam_step, clip_global_norm, lr_at_step, OptimizerState};
pub use run::{eval_loss, finetune_stage2, train_stage1, TrainOutcome};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::ViewProbabilities;
use crate::denoiser::{
    read_container, write_container, ContainerPayload, DenoiserConfig, DenoiserParams, Tensor,
};
use crate::error::{DwaveError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStage {
    /// Stage 1: vocoding on the filtered corpus, no interferers.
    Vocode,
    /// Stage 2: clean/noisy pairs, conditioning on the noisy side.
    FinetunePairs,
    /// Stage 2 variant: clean-audio-only corpus, audio view.
    FinetuneCleanAudio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: TrainStage,
    /// Mixture over conditioning views; stage default when absent.
    #[serde(default)]
    pub view_probs: Option<ViewProbabilities>,
    pub lr_peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub grad_clip_norm: f64,
    /// Remix stage-2 examples with a fresh interferer and SNR on every
    /// draw when an interferer pool is available.
    pub online_mixing: bool,
}

impl TrainConfig {
    pub fn stage_default(stage: TrainStage) -> Self {
        TrainConfig {
            stage,
            view_probs: None,
            lr_peak: 1e-4,
            warmup_steps: 10_000,
            total_steps: 1_000_000,
            batch_size: 32,
            segment_frames: 24,
            seed: 0,
            checkpoint_every: 50_000,
            grad_clip_norm: 1.0,
            online_mixing: true,
        }
    }

    pub fn resolved_view_probs(&self) -> ViewProbabilities {
        self.view_probs.unwrap_or(match self.stage {
            TrainStage::Vocode => ViewProbabilities::vocode(),
            TrainStage::FinetunePairs => ViewProbabilities::finetune_pairs(),
            TrainStage::FinetuneCleanAudio => ViewProbabilities::finetune_clean_audio(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(DwaveError::InvalidArgument(format!(
                "warmup_steps {} > total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(DwaveError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.segment_frames == 0 {
            return Err(DwaveError::InvalidArgument("segment_frames must be >= 1".into()));
        }
        self.resolved_view_probs().validate()
    }
}

/// Everything needed to resume or deploy a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub optimizer: Option<OptimizerState>,
    pub train_config: Option<TrainConfig>,
    pub step: u64,
}

/// Write a checkpoint in the binary container format. Optimizer moments are
/// stored as extra tensors under `opt.m.` / `opt.v.` prefixes.
pub fn save_checkpoint(
    params: &DenoiserParams,
    optimizer: Option<&OptimizerState>,
    train_config: Option<&TrainConfig>,
    step: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut tensors = params.tensors().clone();
    let mut meta = serde_json::json!({});
    if let Some(state) = optimizer {
        tensors.extend(optimizer::moments_to_tensors(state));
        meta["optimizer_step"] = serde_json::json!(state.step);
    }
    if let Some(config) = train_config {
        meta["train_config"] = serde_json::to_value(config)?;
    }
    write_container(
        path,
        &ContainerPayload {
            config: params.config().clone(),
            step,
            meta,
            tensors,
        },
    )
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let payload = read_container(path)?;
    let mut param_tensors = BTreeMap::new();
    let mut m: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut v: BTreeMap<String, Tensor> = BTreeMap::new();
    for (name, tensor) in payload.tensors {
        if let Some(rest) = name.strip_prefix("opt.m.") {
            m.insert(rest.to_string(), tensor);
        } else if let Some(rest) = name.strip_prefix("opt.v.") {
            v.insert(rest.to_string(), tensor);
        } else {
            param_tensors.insert(name, tensor);
        }
    }
    let params = DenoiserParams::from_tensors(&payload.config, param_tensors)?;
    let optimizer = if m.is_empty() {
        None
    } else {
        let opt_step = payload.meta["optimizer_step"].as_u64().unwrap_or(payload.step);
        if m.len() != params.tensors().len() || v.len() != params.tensors().len() {
            return Err(DwaveError::ConfigMismatch(
                "optimizer moments do not cover the parameters".into(),
            ));
        }
        Some(OptimizerState::from_moments(m, v, opt_step))
    };
    let train_config = match payload.meta.get("train_config") {
        Some(value) if !value.is_null() => Some(serde_json::from_value(value.clone())?),
        _ => None,
    };
    Ok(Checkpoint {
        params,
        optimizer,
        train_config,
        step: payload.step,
    })
}

/// Check that a checkpoint can continue under the requested architecture.
pub fn ensure_config_matches(checkpoint: &Checkpoint, expected: &DenoiserConfig) -> Result<()> {
    if checkpoint.params.config() != expected {
        return Err(DwaveError::ConfigMismatch(format!(
            "checkpoint architecture {:?} does not match requested {:?}",
            checkpoint.params.config(),
            expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_defaults_match_training_regime() {
        let vocode = TrainConfig::stage_default(TrainStage::Vocode);
        let p = vocode.resolved_view_probs();
        assert!((p.p_av - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.p_avn, 0.0);
        assert_eq!(vocode.lr_peak, 1e-4);
        assert_eq!(vocode.warmup_steps, 10_000);

        let pairs = TrainConfig::stage_default(TrainStage::FinetunePairs);
        assert_eq!(pairs.resolved_view_probs().p_avn, 1.0);
        let clean = TrainConfig::stage_default(TrainStage::FinetuneCleanAudio);
        assert_eq!(clean.resolved_view_probs().p_a, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::stage_default(TrainStage::Vocode);
        c.validate().unwrap();
        c.warmup_steps = c.total_steps + 1;
        assert!(c.validate().is_err());
        c.warmup_steps = 0;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_with_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.dwck");
        let dconfig = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&dconfig, 3).unwrap();
        let mut state = OptimizerState::new(&params);
        state.step = 17;
        let tconfig = TrainConfig {
            total_steps: 100,
            warmup_steps: 10,
            batch_size: 2,
            ..TrainConfig::stage_default(TrainStage::Vocode)
        };
        save_checkpoint(&params, Some(&state), Some(&tconfig), 17, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.params, params);
        let opt = loaded.optimizer.unwrap();
        assert_eq!(opt.step, 17);
        assert_eq!(opt.m.len(), params.tensors().len());
        let tc = loaded.train_config.unwrap();
        assert_eq!(tc.total_steps, 100);
        assert_eq!(tc.stage, TrainStage::Vocode);
    }

    #[test]
    fn stage1_checkpoint_accepted_by_matching_stage2_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.dwck");
        let dconfig = DenoiserConfig::tiny_reference();
        let params = DenoiserParams::init(&dconfig, 4).unwrap();
        save_checkpoint(&params, None, None, 1000, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        ensure_config_matches(&loaded, &dconfig).unwrap();
        let mut other = dconfig.clone();
        other.feature_dim += 1;
        assert!(ensure_config_matches(&loaded, &other).is_err());
    }
}
