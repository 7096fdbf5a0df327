use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use dwave::audio::{normalize_peak, read_wav, Waveform};
use dwave::conditioning::{
    extract_melproxy_features, synthesize_video_proxy, write_features, ConditionView,
};
use dwave::dataprep::{read_manifest, write_manifest, UtteranceRecord};
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{absolutize, manifest_dir, report_failures, ItemFailure};

fn parse_views(raw: &str) -> Result<Vec<ConditionView>> {
    raw.split(',')
        .map(|s| match s.trim() {
            "av" => Ok(ConditionView::Av),
            "a" => Ok(ConditionView::A),
            "v" => Ok(ConditionView::V),
            "avn" => Ok(ConditionView::Avn),
            other => Err(DwaveError::InvalidArgument(format!("unknown view {other}"))),
        })
        .collect()
}

fn extract_one(
    record: &UtteranceRecord,
    base: &Path,
    out_dir: &Path,
    views: &[ConditionView],
    config: &AppConfig,
    seed: u64,
    force: bool,
) -> Result<BTreeMap<ConditionView, String>> {
    let mut paths = BTreeMap::new();
    let mut audio_view = None;
    for &view in views {
        let rel = format!("features/{}.{}.featbin", record.id, view.name());
        let target = out_dir.join(&rel);
        if target.exists() && !force {
            paths.insert(view, rel);
            continue;
        }
        let features = match view {
            ConditionView::A | ConditionView::Av | ConditionView::V => {
                if audio_view.is_none() {
                    let clean = read_wav(record.resolve(base, &record.clean_audio_path))?;
                    let (norm, _) = normalize_peak(&clean.samples);
                    audio_view = Some(extract_melproxy_features(
                        &Waveform::new(norm, clean.sample_rate),
                        &config.audio,
                        ConditionView::A,
                        &record.id,
                    )?);
                }
                let a = audio_view.as_ref().unwrap();
                match view {
                    ConditionView::V => synthesize_video_proxy(a, seed),
                    _ => a.clone().with_view(view),
                }
            }
            ConditionView::Avn => {
                let mixed_path = record.mixed_audio_path.as_ref().ok_or_else(|| {
                    DwaveError::InvalidArgument(
                        "avn view requested but the record has no mixed audio".into(),
                    )
                })?;
                let mixed = read_wav(record.resolve(base, mixed_path))?;
                let (norm, _) = normalize_peak(&mixed.samples);
                extract_melproxy_features(
                    &Waveform::new(norm, mixed.sample_rate),
                    &config.audio,
                    ConditionView::Avn,
                    &record.id,
                )?
            }
        };
        write_features(&target, &features)?;
        paths.insert(view, rel);
    }
    Ok(paths)
}

pub fn run(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    out_dir: &Path,
    views_raw: &str,
    force: bool,
) -> Result<usize> {
    let views = parse_views(views_raw)?;
    let records = read_manifest(manifest_path)?;
    let base = manifest_dir(manifest_path);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "features",
        seed,
        &[("views".into(), views_raw.into()), ("force".into(), force.to_string())],
    )?;

    let results: Vec<(UtteranceRecord, Option<ItemFailure>)> = records
        .par_iter()
        .map(|record| {
            let mut updated = record.clone();
            updated.clean_audio_path = absolutize(base, &record.clean_audio_path);
            if let Some(m) = &record.mixed_audio_path {
                updated.mixed_audio_path = Some(absolutize(base, m));
            }
            match extract_one(record, base, out_dir, &views, config, seed, force) {
                Ok(paths) => {
                    let mut merged = updated.feature_paths.clone().unwrap_or_default();
                    merged.extend(paths);
                    updated.feature_paths = Some(merged);
                    (updated, None)
                }
                Err(e) => (
                    updated,
                    Some(ItemFailure { id: record.id.clone(), error: e.to_string() }),
                ),
            }
        })
        .collect();

    let updated: Vec<UtteranceRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    write_manifest(out_dir.join("manifest.jsonl"), &updated)?;
    let failures: Vec<ItemFailure> = results.into_iter().filter_map(|(_, f)| f).collect();
    report_failures(out_dir, &failures)
}
