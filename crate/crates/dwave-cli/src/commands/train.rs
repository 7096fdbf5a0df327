use std::path::Path;

use dwave::audio::{read_wav, Waveform};
use dwave::dataprep::read_manifest;
use dwave::trainer::{finetune_stage2, train_stage1, TrainOutcome, TrainStage};
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{manifest_dir, write_json};

fn write_summary(out_dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    let view_counts: std::collections::BTreeMap<&str, u64> = outcome
        .view_counts
        .iter()
        .map(|(v, c)| (v.name(), *c))
        .collect();
    write_json(
        &out_dir.join("train_summary.json"),
        &serde_json::json!({
            "steps": outcome.steps,
            "step0_loss": outcome.step0_loss,
            "final_loss": outcome.final_loss,
            "initial_heldout_loss": outcome.initial_heldout_loss,
            "final_heldout_loss": outcome.final_heldout_loss,
            "view_counts": view_counts,
            "checkpoint": outcome
                .checkpoint_path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned()),
        }),
    )
}

pub fn run_stage1(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    out_dir: &Path,
    heldout_path: Option<&Path>,
) -> Result<usize> {
    let records = read_manifest(manifest_path)?;
    let heldout = heldout_path.map(read_manifest).transpose()?;
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(out_dir, config, "train", seed, &[])?;
    let schedule = config.schedule.build()?;
    let train_config = config.train.to_train_config(TrainStage::Vocode, seed);
    let outcome = train_stage1(
        &records,
        manifest_dir(manifest_path),
        &config.denoiser,
        &train_config,
        &schedule,
        &config.audio,
        out_dir,
        heldout.as_deref(),
    )?;
    write_summary(out_dir, &outcome)?;
    println!(
        "trained {} steps: loss {:.4} -> {:.4}",
        outcome.steps, outcome.step0_loss, outcome.final_loss
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn run_stage2(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    stage_raw: &str,
    interferers_path: Option<&Path>,
    heldout_path: Option<&Path>,
) -> Result<usize> {
    let stage = match stage_raw {
        "pairs" => TrainStage::FinetunePairs,
        "clean-audio" => TrainStage::FinetuneCleanAudio,
        other => {
            return Err(DwaveError::InvalidArgument(format!(
                "unknown fine-tuning stage {other}; expected pairs or clean-audio"
            )))
        }
    };
    if !checkpoint.exists() {
        return Err(DwaveError::InvalidArgument(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let records = read_manifest(manifest_path)?;
    let heldout = heldout_path.map(read_manifest).transpose()?;
    let pool: Option<Vec<Waveform>> = match interferers_path {
        Some(path) => {
            let pool_records = read_manifest(path)?;
            let pool_base = manifest_dir(path);
            let mut wavs = Vec::with_capacity(pool_records.len());
            for r in &pool_records {
                wavs.push(read_wav(r.resolve(pool_base, &r.clean_audio_path))?);
            }
            Some(wavs)
        }
        None => None,
    };
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "finetune",
        seed,
        &[
            ("stage".into(), stage_raw.into()),
            ("checkpoint".into(), checkpoint.display().to_string()),
        ],
    )?;
    let schedule = config.schedule.build()?;
    let train_config = config.train.to_train_config(stage, seed);
    let outcome = finetune_stage2(
        &records,
        manifest_dir(manifest_path),
        checkpoint,
        &train_config,
        &schedule,
        &config.audio,
        out_dir,
        pool.as_deref(),
        heldout.as_deref(),
    )?;
    write_summary(out_dir, &outcome)?;
    println!(
        "fine-tuned {} steps: loss {:.4} -> {:.4}",
        outcome.steps, outcome.step0_loss, outcome.final_loss
    );
    Ok(0)
}
