use std::path::Path;

use rayon::prelude::*;

use dwave::audio::{read_wav, write_wav};
use dwave::dataprep::{mix_at_snr, read_manifest, sample_snr, write_manifest, InterfererKind, UtteranceRecord};
use dwave::rng::Prng;
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{absolutize, manifest_dir, report_failures, ItemFailure};

pub fn run(
    config: &AppConfig,
    seed: u64,
    clean_manifest: &Path,
    interferer_manifest: &Path,
    kind_raw: &str,
    out_dir: &Path,
) -> Result<usize> {
    let kind = match kind_raw {
        "speech" => InterfererKind::Speech,
        "noise" => InterfererKind::Noise,
        other => {
            return Err(DwaveError::InvalidArgument(format!(
                "unknown interferer kind {other}; expected speech or noise"
            )))
        }
    };
    let records = read_manifest(clean_manifest)?;
    let interferers = read_manifest(interferer_manifest)?;
    if interferers.is_empty() {
        return Err(DwaveError::Manifest("empty interferer manifest".into()));
    }
    let base = manifest_dir(clean_manifest);
    let interferer_base = manifest_dir(interferer_manifest);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "mix",
        seed,
        &[("kind".into(), kind_raw.into()), ("interferers".into(), interferer_manifest.display().to_string())],
    )?;

    let results: Vec<(Option<UtteranceRecord>, Option<ItemFailure>)> = records
        .par_iter()
        .map(|record| {
            let work = || -> Result<UtteranceRecord> {
                // one independent stream per utterance: corpus parallelism
                // cannot perturb the draws
                let mut rng = Prng::derive(seed, &format!("mix/{}", record.id));
                let clean = read_wav(record.resolve(base, &record.clean_audio_path))?;
                let pick = rng.uniform_int(0, interferers.len() - 1);
                let interferer_record = &interferers[pick];
                let interferer = read_wav(
                    interferer_record.resolve(interferer_base, &interferer_record.clean_audio_path),
                )?;
                let snr = sample_snr(kind, &mut rng)?;
                let mix = mix_at_snr(&clean, &interferer, snr)?;
                let rel = format!("mixed/{}.wav", record.id);
                write_wav(out_dir.join(&rel), &mix.mixed)?;
                let mut updated = record.clone();
                updated.clean_audio_path = absolutize(base, &record.clean_audio_path);
                updated.mixed_audio_path = Some(rel);
                updated.interferer_kind = kind;
                updated.snr_db = Some(snr);
                Ok(updated)
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

    let updated: Vec<UtteranceRecord> =
        results.iter().filter_map(|(r, _)| r.clone()).collect();
    write_manifest(out_dir.join("mixed.jsonl"), &updated)?;
    let failures: Vec<ItemFailure> = results.into_iter().filter_map(|(_, f)| f).collect();
    report_failures(out_dir, &failures)
}
