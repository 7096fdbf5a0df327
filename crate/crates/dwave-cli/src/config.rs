//! TOML configuration with presets and `key=value` overrides. Every run
//! writes its resolved configuration into the output directory so results
//! can be reproduced from the snapshot plus the seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dwave::conditioning::MelConfig;
use dwave::denoiser::DenoiserConfig;
use dwave::diffusion::{make_linear_schedule, NoiseSchedule};
use dwave::trainer::{TrainConfig, TrainStage};
use dwave::{DwaveError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr_peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub checkpoint_every: u64,
    pub grad_clip_norm: f64,
    pub online_mixing: bool,
}

impl TrainSection {
    pub fn to_train_config(&self, stage: TrainStage, seed: u64) -> TrainConfig {
        TrainConfig {
            stage,
            view_probs: None,
            lr_peak: self.lr_peak,
            warmup_steps: self.warmup_steps,
            total_steps: self.total_steps,
            batch_size: self.batch_size,
            segment_frames: self.segment_frames,
            seed,
            checkpoint_every: self.checkpoint_every,
            grad_clip_norm: self.grad_clip_norm,
            online_mixing: self.online_mixing,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub audio: MelConfig,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub train: TrainSection,
    /// Segment window (frames) for chunked synthesis.
    pub synthesis_segment_frames: usize,
}

impl AppConfig {
    /// Full-rate preset: 16 kHz audio, 640x upsampling, full training run.
    pub fn paper() -> Self {
        AppConfig {
            audio: MelConfig::default(),
            schedule: ScheduleConfig { steps: 1000, beta_start: 1e-6, beta_end: 1e-2 },
            denoiser: DenoiserConfig::default(),
            train: TrainSection {
                lr_peak: 1e-4,
                warmup_steps: 10_000,
                total_steps: 1_000_000,
                batch_size: 32,
                segment_frames: 24,
                checkpoint_every: 50_000,
                grad_clip_norm: 1.0,
                online_mixing: true,
            },
            synthesis_segment_frames: 24,
        }
    }

    /// Desk preset: 8 kHz audio, 64x upsampling, small model and short runs
    /// sized for a CPU.
    pub fn desk() -> Self {
        AppConfig {
            audio: MelConfig::desk_8k(32),
            schedule: ScheduleConfig { steps: 1000, beta_start: 1e-6, beta_end: 1e-2 },
            denoiser: DenoiserConfig {
                upsample_factors: vec![4, 4, 2, 2],
                feature_dim: 32,
                base_channels: 16,
                noise_embed_dim: 64,
            },
            train: TrainSection {
                lr_peak: 3e-4,
                warmup_steps: 200,
                total_steps: 2000,
                batch_size: 8,
                segment_frames: 24,
                checkpoint_every: 0,
                grad_clip_norm: 1.0,
                online_mixing: true,
            },
            synthesis_segment_frames: 24,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        if self.audio.hop != self.denoiser.samples_per_frame() {
            return Err(DwaveError::ConfigMismatch(format!(
                "audio.hop {} must equal the product of denoiser.upsample_factors ({})",
                self.audio.hop,
                self.denoiser.samples_per_frame()
            )));
        }
        if self.audio.n_mels != self.denoiser.feature_dim {
            return Err(DwaveError::ConfigMismatch(format!(
                "audio.n_mels {} must equal denoiser.feature_dim {} when features \
                 come from the built-in extractor",
                self.audio.n_mels, self.denoiser.feature_dim
            )));
        }
        Ok(())
    }
}

fn parse_toml_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| {
            DwaveError::InvalidArgument(format!("override path {path} crosses a non-table"))
        })?;
        if i + 1 == segments.len() {
            table.insert(segment.to_string(), parse_toml_literal(raw));
            return Ok(());
        }
        cursor = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

/// Resolve preset -> optional config file -> `key=value` overrides.
pub fn load_config(
    preset: &str,
    config_path: Option<&Path>,
    overrides: &[String],
) -> Result<AppConfig> {
    let base = match preset {
        "paper" => AppConfig::paper(),
        "desk" => AppConfig::desk(),
        other => {
            return Err(DwaveError::InvalidArgument(format!(
                "unknown preset {other}; expected paper or desk"
            )))
        }
    };
    let mut value = toml::Value::try_from(&base)
        .map_err(|e| DwaveError::InvalidArgument(format!("config serialization: {e}")))?;
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)?;
        let file_value: toml::Value = text
            .parse()
            .map_err(|e| DwaveError::InvalidArgument(format!("{}: {e}", path.display())))?;
        merge_toml(&mut value, &file_value);
    }
    for item in overrides {
        let (path, raw) = item.split_once('=').ok_or_else(|| {
            DwaveError::InvalidArgument(format!("override {item} is not key=value"))
        })?;
        apply_override(&mut value, path.trim(), raw.trim())?;
    }
    let config: AppConfig = value
        .try_into()
        .map_err(|e| DwaveError::InvalidArgument(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn merge_toml(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

/// Write the resolved configuration plus run parameters into the output
/// directory.
pub fn write_snapshot(
    out_dir: &Path,
    config: &AppConfig,
    command: &str,
    seed: u64,
    extra: &[(String, String)],
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut doc = toml::Table::new();
    doc.insert("command".into(), toml::Value::String(command.to_string()));
    doc.insert("seed".into(), toml::Value::Integer(seed as i64));
    let mut run = toml::Table::new();
    for (k, v) in extra {
        run.insert(k.clone(), toml::Value::String(v.clone()));
    }
    if !run.is_empty() {
        doc.insert("run".into(), toml::Value::Table(run));
    }
    let config_value = toml::Value::try_from(config)
        .map_err(|e| DwaveError::InvalidArgument(format!("config serialization: {e}")))?;
    doc.insert("config".into(), config_value);
    let text = toml::to_string_pretty(&doc)
        .map_err(|e| DwaveError::InvalidArgument(format!("config serialization: {e}")))?;
    std::fs::write(out_dir.join("resolved_config.toml"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        AppConfig::paper().validate().unwrap();
        AppConfig::desk().validate().unwrap();
        assert_eq!(AppConfig::paper().denoiser.samples_per_frame(), 640);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let config = load_config(
            "desk",
            None,
            &[
                "train.total_steps=50".to_string(),
                "schedule.steps=100".to_string(),
                "denoiser.base_channels=8".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(config.train.total_steps, 50);
        assert_eq!(config.schedule.steps, 100);
        assert_eq!(config.denoiser.base_channels, 8);
    }

    #[test]
    fn inconsistent_hop_is_rejected() {
        let err = load_config("desk", None, &["audio.hop=128".to_string()]);
        assert!(err.is_err());
    }
}
