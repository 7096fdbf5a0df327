//! The training loop shared by both stages: assemble a batch (utterance,
//! view, segment, continuous noise level, noise draw), accumulate exact L1
//! gradients, clip, and take one Adam step. All randomness flows through a
//! single seeded stream consumed in a fixed order, so runs are bit
//! reproducible.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::audio::{normalize_peak, Waveform};
use crate::conditioning::{
    layer_normalize, sample_segment, ConditionView, MelConfig, ViewProbabilities,
};
use crate::dataprep::{mix_at_snr, sample_snr, InterfererKind, UtteranceRecord};
use crate::denoiser::{backprop_gradients, DenoiserConfig, DenoiserModel, DenoiserParams, TrainingExample};
use crate::diffusion::{sample_continuous_noise_level, training_loss, NoiseSchedule};
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::data::TrainDataset;
use super::optimizer::{adam_step, clip_global_norm, lr_at_step, OptimizerState};
use super::{load_checkpoint, save_checkpoint, TrainConfig, TrainStage};

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    pub optimizer: OptimizerState,
    pub steps: u64,
    pub checkpoint_path: PathBuf,
    pub initial_heldout_loss: Option<f64>,
    pub final_heldout_loss: Option<f64>,
    /// First training-batch loss before any update.
    pub step0_loss: f64,
    pub final_loss: f64,
    pub view_counts: BTreeMap<ConditionView, u64>,
}

fn draw_view(probs: &ViewProbabilities, rng: &mut Prng) -> ConditionView {
    let u = rng.uniform(0.0, 1.0);
    let mut cumulative = 0.0;
    let mut chosen = ConditionView::Av;
    for (view, p) in probs.entries() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        chosen = view;
        if u < cumulative {
            break;
        }
    }
    chosen
}

/// Per-draw noisy-view synthesis: mix a fresh interferer into the clean
/// signal at a freshly drawn SNR and refeaturize.
fn online_mixed_view(
    dataset: &TrainDataset,
    utt_idx: usize,
    pool: &[Waveform],
    rng: &mut Prng,
) -> Result<crate::conditioning::FeatureSequence> {
    let utt = &dataset.utterances[utt_idx];
    let interferer = &pool[rng.uniform_int(0, pool.len() - 1)];
    let snr = sample_snr(utt.interferer_kind, rng)?;
    let clean = Waveform::new(utt.clean_raw.clone(), utt.sample_rate);
    let mix = mix_at_snr(&clean, interferer, snr)?;
    let (norm, _) = normalize_peak(&mix.mixed.samples);
    let features = crate::conditioning::extract_melproxy_features(
        &Waveform::new(norm, utt.sample_rate),
        &dataset.mel,
        ConditionView::Avn,
        &utt.id,
    )?;
    layer_normalize(&features)
}

struct BatchDraw {
    example: TrainingExample,
    view: ConditionView,
}

fn assemble_batch(
    dataset: &TrainDataset,
    probs: &ViewProbabilities,
    config: &TrainConfig,
    schedule: &NoiseSchedule,
    samples_per_frame: usize,
    interferer_pool: Option<&[Waveform]>,
    rng: &mut Prng,
) -> Result<Vec<BatchDraw>> {
    let s_frames = config.segment_frames;
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let utt_idx = dataset.sample_utterance(rng);
        let utt = &dataset.utterances[utt_idx];
        let view = draw_view(probs, rng);
        let start = if utt.frames < s_frames {
            1
        } else {
            sample_segment(utt.frames, s_frames, rng)?
        };
        let cond = if view == ConditionView::Avn
            && config.online_mixing
            && utt.interferer_kind != InterfererKind::None
            && interferer_pool.map_or(false, |p| !p.is_empty())
        {
            online_mixed_view(dataset, utt_idx, interferer_pool.unwrap(), rng)?
                .slice_frames(start - 1, s_frames, true)?
        } else {
            utt.view_segment(view, start, s_frames)?
        };
        let level = sample_continuous_noise_level(schedule, rng);
        let epsilon = rng.standard_normal_vec(s_frames * samples_per_frame);
        batch.push(BatchDraw {
            example: TrainingExample {
                x0: utt.target_segment(start, s_frames),
                cond,
                level,
                epsilon,
            },
            view,
        });
    }
    Ok(batch)
}

/// Mean loss over a deterministic set of examples drawn from a dataset.
pub fn eval_loss(
    params: &DenoiserParams,
    dataset: &TrainDataset,
    probs: &ViewProbabilities,
    config: &TrainConfig,
    schedule: &NoiseSchedule,
    n_examples: usize,
    seed: u64,
) -> Result<f64> {
    let spf = params.config().samples_per_frame();
    let mut rng = Prng::derive(seed, "heldout-eval");
    let eval_config = TrainConfig {
        batch_size: n_examples,
        online_mixing: false,
        ..config.clone()
    };
    let batch = assemble_batch(dataset, probs, &eval_config, schedule, spf, None, &mut rng)?;
    let model = DenoiserModel::new(params);
    let losses: Vec<Result<f64>> = batch
        .par_iter()
        .map(|draw| {
            training_loss(
                &model,
                &draw.example.x0,
                &draw.example.cond,
                draw.example.level,
                &draw.example.epsilon,
            )
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / n_examples as f64)
}

struct LoopInputs<'a> {
    dataset: &'a TrainDataset,
    heldout: Option<&'a TrainDataset>,
    config: &'a TrainConfig,
    schedule: &'a NoiseSchedule,
    out_dir: &'a Path,
    interferer_pool: Option<&'a [Waveform]>,
}

fn run_loop(mut params: DenoiserParams, inputs: LoopInputs<'_>) -> Result<TrainOutcome> {
    let config = inputs.config;
    config.validate()?;
    let spf = params.config().samples_per_frame();
    if inputs.dataset.mel.hop != spf {
        return Err(DwaveError::ConfigMismatch(format!(
            "feature hop {} does not match the model's {} samples per frame",
            inputs.dataset.mel.hop, spf
        )));
    }
    std::fs::create_dir_all(inputs.out_dir)?;
    let probs = config.resolved_view_probs();
    let mut optimizer = OptimizerState::new(&params);
    let mut rng = Prng::derive(config.seed, "train-loop");
    let mut log = std::io::BufWriter::new(std::fs::File::create(
        inputs.out_dir.join("train_log.jsonl"),
    )?);
    let mut view_counts: BTreeMap<ConditionView, u64> = BTreeMap::new();

    let initial_heldout_loss = match inputs.heldout {
        Some(h) => Some(eval_loss(&params, h, &probs, config, inputs.schedule, 64, config.seed)?),
        None => None,
    };

    let mut step0_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    for step in 0..config.total_steps {
        let started = Instant::now();
        let batch = assemble_batch(
            inputs.dataset,
            &probs,
            config,
            inputs.schedule,
            spf,
            inputs.interferer_pool,
            &mut rng,
        )?;
        for draw in &batch {
            *view_counts.entry(draw.view).or_insert(0) += 1;
        }
        let examples: Vec<TrainingExample> =
            batch.into_iter().map(|d| d.example).collect();
        let (loss, mut grads) = backprop_gradients(&params, &examples)?;
        if step == 0 {
            step0_loss = loss;
        }
        final_loss = loss;
        clip_global_norm(&mut grads, config.grad_clip_norm);
        let lr = lr_at_step(step + 1, config)?;
        adam_step(&mut params, &grads, &mut optimizer, lr)?;

        let record = serde_json::json!({
            "step": step,
            "lr": lr,
            "loss": loss,
            "wall_ms": started.elapsed().as_secs_f64() * 1e3,
        });
        serde_json::to_writer(&mut log, &record)?;
        log.write_all(b"\n")?;

        if config.checkpoint_every > 0
            && (step + 1) % config.checkpoint_every == 0
            && step + 1 != config.total_steps
        {
            let path = inputs.out_dir.join(format!("checkpoint_step{:08}.dwck", step + 1));
            save_checkpoint(&params, Some(&optimizer), Some(config), step + 1, &path)?;
        }
    }
    log.flush()?;

    let checkpoint_path = inputs.out_dir.join("checkpoint_final.dwck");
    save_checkpoint(
        &params,
        Some(&optimizer),
        Some(config),
        config.total_steps,
        &checkpoint_path,
    )?;
    let final_heldout_loss = match inputs.heldout {
        Some(h) => Some(eval_loss(&params, h, &probs, config, inputs.schedule, 64, config.seed)?),
        None => None,
    };
    Ok(TrainOutcome {
        params,
        optimizer,
        steps: config.total_steps,
        checkpoint_path,
        initial_heldout_loss,
        final_heldout_loss,
        step0_loss,
        final_loss,
        view_counts,
    })
}

fn needed_views(probs: &ViewProbabilities) -> Vec<ConditionView> {
    probs
        .entries()
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(v, _)| *v)
        .collect()
}

/// Stage 1: vocoding on the (quality-filtered) corpus, no interferers.
#[allow(clippy::too_many_arguments)]
pub fn train_stage1(
    manifest: &[UtteranceRecord],
    manifest_dir: &Path,
    denoiser_config: &DenoiserConfig,
    train_config: &TrainConfig,
    schedule: &NoiseSchedule,
    mel: &MelConfig,
    out_dir: &Path,
    heldout: Option<&[UtteranceRecord]>,
) -> Result<TrainOutcome> {
    if train_config.stage != TrainStage::Vocode {
        return Err(DwaveError::InvalidArgument(
            "train_stage1 expects the vocode stage".into(),
        ));
    }
    train_config.validate()?;
    denoiser_config.validate()?;
    if manifest.iter().any(|r| r.quality_score.is_none()) {
        eprintln!(
            "warning: manifest has records without quality scores; stage-1 training \
             expects a quality-filtered corpus"
        );
    }
    let probs = train_config.resolved_view_probs();
    let views = needed_views(&probs);
    let dataset = TrainDataset::load(manifest, manifest_dir, mel, &views, train_config.seed)?;
    let heldout_ds = match heldout {
        Some(records) => Some(TrainDataset::load(
            records,
            manifest_dir,
            mel,
            &views,
            train_config.seed,
        )?),
        None => None,
    };
    let params = DenoiserParams::init(denoiser_config, train_config.seed)?;
    run_loop(
        params,
        LoopInputs {
            dataset: &dataset,
            heldout: heldout_ds.as_ref(),
            config: train_config,
            schedule,
            out_dir,
            interferer_pool: None,
        },
    )
}

/// Stage 2: fine-tune a stage-1 checkpoint on clean/noisy pairs (or on a
/// clean-audio-only corpus for the audio-view variant). The learning-rate
/// schedule restarts with a fresh warmup.
#[allow(clippy::too_many_arguments)]
pub fn finetune_stage2(
    pairs_manifest: &[UtteranceRecord],
    manifest_dir: &Path,
    checkpoint_path: &Path,
    train_config: &TrainConfig,
    schedule: &NoiseSchedule,
    mel: &MelConfig,
    out_dir: &Path,
    interferer_pool: Option<&[Waveform]>,
    heldout: Option<&[UtteranceRecord]>,
) -> Result<TrainOutcome> {
    if train_config.stage == TrainStage::Vocode {
        return Err(DwaveError::InvalidArgument(
            "finetune_stage2 expects a fine-tuning stage".into(),
        ));
    }
    train_config.validate()?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let probs = train_config.resolved_view_probs();
    if train_config.stage == TrainStage::FinetunePairs {
        let online_ok = |r: &UtteranceRecord| {
            train_config.online_mixing
                && r.interferer_kind != InterfererKind::None
                && interferer_pool.map_or(false, |p| !p.is_empty())
        };
        for r in pairs_manifest {
            let has_precomputed_avn = r
                .feature_paths
                .as_ref()
                .map_or(false, |m| m.contains_key(&ConditionView::Avn));
            if r.mixed_audio_path.is_none() && !has_precomputed_avn && !online_ok(r) {
                return Err(DwaveError::Manifest(format!(
                    "{}: pair fine-tuning needs a mixed side (mixed audio, noisy-view \
                     features, or interferer metadata with a pool)",
                    r.id
                )));
            }
        }
    }
    let views = needed_views(&probs);
    let dataset = TrainDataset::load(pairs_manifest, manifest_dir, mel, &views, train_config.seed)?;
    let heldout_ds = match heldout {
        Some(records) => Some(TrainDataset::load(
            records,
            manifest_dir,
            mel,
            &views,
            train_config.seed,
        )?),
        None => None,
    };
    run_loop(
        checkpoint.params,
        LoopInputs {
            dataset: &dataset,
            heldout: heldout_ds.as_ref(),
            config: train_config,
            schedule,
            out_dir,
            interferer_pool,
        },
    )
}
