use std::path::Path;

use rayon::prelude::*;

use dwave::audio::{read_wav, Waveform};
use dwave::dataprep::read_manifest;
use dwave::enhance::evaluate_pairs;
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{manifest_dir, report_failures, write_json, ItemFailure};

pub fn run(config: &AppConfig, seed: u64, manifest_path: &Path, out_dir: &Path) -> Result<usize> {
    let records = read_manifest(manifest_path)?;
    let base = manifest_dir(manifest_path);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(out_dir, config, "eval", seed, &[])?;

    let loaded: Vec<std::result::Result<(String, Waveform, Waveform), ItemFailure>> = records
        .par_iter()
        .map(|record| {
            let work = || -> Result<(String, Waveform, Waveform)> {
                let estimate_path = record.mixed_audio_path.as_ref().ok_or_else(|| {
                    DwaveError::Manifest(format!(
                        "{}: pair manifest needs the estimate in mixed_audio_path",
                        record.id
                    ))
                })?;
                let estimate = read_wav(record.resolve(base, estimate_path))?;
                let reference = read_wav(record.resolve(base, &record.clean_audio_path))?;
                Ok((record.id.clone(), estimate, reference))
            };
            work().map_err(|e| ItemFailure { id: record.id.clone(), error: e.to_string() })
        })
        .collect();

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for item in loaded {
        match item {
            Ok(pair) => pairs.push(pair),
            Err(f) => failures.push(f),
        }
    }
    if !pairs.is_empty() {
        let report = evaluate_pairs(&pairs, &config.audio)?;
        write_json(&out_dir.join("eval_report.json"), &report)?;
        println!(
            "evaluated {} pairs: mean SI-SDR {:.2} dB, mean log-mel distance {:.4}",
            report.rows.len(),
            report.mean_si_sdr_db,
            report.mean_log_mel_distance
        );
    }
    report_failures(out_dir, &failures)
}
