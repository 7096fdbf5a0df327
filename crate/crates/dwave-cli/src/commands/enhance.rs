use std::path::Path;

use rayon::prelude::*;

use dwave::audio::{normalize_peak, read_wav, write_wav};
use dwave::conditioning::{load_precomputed_features, ConditionView};
use dwave::dataprep::{read_manifest, write_manifest, UtteranceRecord};
use dwave::denoiser::DenoiserParams;
use dwave::diffusion::SamplerConfig;
use dwave::enhance::{enhance_utterance, resynth_from_features, SynthesisOptions};
use dwave::trainer::load_checkpoint;
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{absolutize, manifest_dir, report_failures, ItemFailure};

fn load_params(config: &AppConfig, checkpoint: &Path) -> Result<DenoiserParams> {
    if !checkpoint.exists() {
        return Err(DwaveError::InvalidArgument(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    if ckpt.params.config().feature_dim != config.denoiser.feature_dim {
        return Err(DwaveError::ConfigMismatch(format!(
            "checkpoint feature_dim {} does not match configured {}",
            ckpt.params.config().feature_dim,
            config.denoiser.feature_dim
        )));
    }
    Ok(ckpt.params)
}

struct SynthesisRun<'a> {
    config: &'a AppConfig,
    params: DenoiserParams,
    sampler: SamplerConfig,
    out_subdir: &'static str,
}

impl SynthesisRun<'_> {
    fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            sampler: self.sampler.clone(),
            segment_frames: self.config.synthesis_segment_frames,
        }
    }
}

fn run_synthesis(
    run: &SynthesisRun<'_>,
    records: &[UtteranceRecord],
    base: &Path,
    out_dir: &Path,
    manifest_name: &str,
    synthesize: impl Fn(&SynthesisRun<'_>, &UtteranceRecord, &Path) -> Result<dwave::audio::Waveform>
        + Sync
        + Send,
) -> Result<usize> {
    let results: Vec<(Option<UtteranceRecord>, Option<ItemFailure>)> = records
        .par_iter()
        .map(|record| {
            let work = || -> Result<UtteranceRecord> {
                let wav = synthesize(run, record, base)?;
                let rel = format!("{}/{}.wav", run.out_subdir, record.id);
                write_wav(out_dir.join(&rel), &wav)?;
                let mut pair = record.clone();
                pair.clean_audio_path = absolutize(base, &record.clean_audio_path);
                // the estimate occupies the mixed slot of the pair manifest
                pair.mixed_audio_path = Some(rel);
                Ok(pair)
            };
            match work() {
                Ok(r) => (Some(r), None),
                Err(e) => (
                    None,
                    Some(ItemFailure { id: record.id.clone(), error: e.to_string() }),
                ),
            }
        })
        .collect();
    let updated: Vec<UtteranceRecord> = results.iter().filter_map(|(r, _)| r.clone()).collect();
    write_manifest(out_dir.join(manifest_name), &updated)?;
    let failures: Vec<ItemFailure> = results.into_iter().filter_map(|(_, f)| f).collect();
    report_failures(out_dir, &failures)
}

pub fn run_enhance(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    sampler_name: &str,
) -> Result<usize> {
    let params = load_params(config, checkpoint)?;
    let schedule = config.schedule.build()?;
    let sampler = SamplerConfig::parse_name(sampler_name, schedule.steps(), seed)?;
    let records = read_manifest(manifest_path)?;
    let base = manifest_dir(manifest_path);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "enhance",
        seed,
        &[
            ("sampler".into(), sampler_name.into()),
            ("checkpoint".into(), checkpoint.display().to_string()),
        ],
    )?;
    let run = SynthesisRun { config, params, sampler, out_subdir: "enhanced" };
    run_synthesis(
        &run,
        &records,
        base,
        out_dir,
        "enhanced.jsonl",
        |run, record, base| {
            let schedule = run.config.schedule.build()?;
            let opts = run.options();
            // precomputed noisy-view features win; otherwise featurize the
            // mixed audio on the fly
            if let Some(path) = record
                .feature_paths
                .as_ref()
                .and_then(|m| m.get(&ConditionView::Avn))
            {
                let features = load_precomputed_features(record.resolve(base, path))?;
                if features.feature_dim() != run.params.config().feature_dim {
                    return Err(DwaveError::ConfigMismatch(format!(
                        "{}: feature_dim {} does not match model {}",
                        record.id,
                        features.feature_dim(),
                        run.params.config().feature_dim
                    )));
                }
                let scale = match &record.mixed_audio_path {
                    Some(p) => {
                        let mixed = read_wav(record.resolve(base, p))?;
                        normalize_peak(&mixed.samples).1
                    }
                    None => 1.0,
                };
                resynth_from_features(
                    &run.params,
                    &features,
                    scale,
                    run.config.audio.sample_rate,
                    &schedule,
                    &opts,
                )
            } else {
                let mixed_path = record.mixed_audio_path.as_ref().ok_or_else(|| {
                    DwaveError::Manifest(format!(
                        "{}: record has neither noisy-view features nor mixed audio",
                        record.id
                    ))
                })?;
                let mixed = read_wav(record.resolve(base, mixed_path))?;
                enhance_utterance(&run.params, &mixed, &run.config.audio, &schedule, &opts, &record.id)
            }
        },
    )
}

pub fn run_resynth(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    view_raw: &str,
    sampler_name: &str,
) -> Result<usize> {
    let view = match view_raw {
        "a" => ConditionView::A,
        "av" => ConditionView::Av,
        "v" => ConditionView::V,
        other => {
            return Err(DwaveError::InvalidArgument(format!(
                "re-synthesis conditions on clean-signal views (a, av, v), not {other}"
            )))
        }
    };
    let params = load_params(config, checkpoint)?;
    let schedule = config.schedule.build()?;
    let sampler = SamplerConfig::parse_name(sampler_name, schedule.steps(), seed)?;
    let records = read_manifest(manifest_path)?;
    let base = manifest_dir(manifest_path);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "resynth",
        seed,
        &[("sampler".into(), sampler_name.into()), ("view".into(), view_raw.into())],
    )?;
    let run = SynthesisRun { config, params, sampler, out_subdir: "resynth" };
    run_synthesis(
        &run,
        &records,
        base,
        out_dir,
        "resynth.jsonl",
        move |run, record, base| {
            let schedule = run.config.schedule.build()?;
            let opts = run.options();
            if let Some(path) = record.feature_paths.as_ref().and_then(|m| m.get(&view)) {
                let features = load_precomputed_features(record.resolve(base, path))?;
                let scale = match read_wav(record.resolve(base, &record.clean_audio_path)) {
                    Ok(clean) => normalize_peak(&clean.samples).1,
                    Err(_) => 1.0,
                };
                return resynth_from_features(
                    &run.params,
                    &features,
                    scale,
                    run.config.audio.sample_rate,
                    &schedule,
                    &opts,
                );
            }
            let clean = read_wav(record.resolve(base, &record.clean_audio_path)).map_err(|e| {
                DwaveError::Manifest(format!(
                    "{}: no {} features and clean audio unreadable ({e})",
                    record.id,
                    view.name()
                ))
            })?;
            let (norm, scale) = normalize_peak(&clean.samples);
            let norm_wav = dwave::audio::Waveform::new(norm, clean.sample_rate);
            let audio_view = dwave::conditioning::extract_melproxy_features(
                &norm_wav,
                &run.config.audio,
                ConditionView::A,
                &record.id,
            )?;
            let features = match view {
                ConditionView::V => dwave::conditioning::synthesize_video_proxy(&audio_view, seed),
                _ => audio_view.with_view(view),
            };
            resynth_from_features(
                &run.params,
                &features,
                scale,
                run.config.audio.sample_rate,
                &schedule,
                &opts,
            )
        },
    )
}
