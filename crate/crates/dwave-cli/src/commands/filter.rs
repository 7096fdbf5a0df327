use std::path::Path;

use dwave::dataprep::{
    filter_manifest, read_manifest, write_manifest, EnergyHeuristic, OraclePair,
    QualityEstimator, UtteranceRecord,
};
use dwave::{DwaveError, Result};

use crate::config::{write_snapshot, AppConfig};

use super::{absolutize, manifest_dir, write_json};

pub fn run(
    config: &AppConfig,
    seed: u64,
    manifest_path: &Path,
    out_dir: &Path,
    threshold: f64,
    estimator_name: &str,
) -> Result<usize> {
    let estimator: Box<dyn QualityEstimator> = match estimator_name {
        "oracle" | "oracle-pair" => Box::new(OraclePair),
        "energy" | "energy-heuristic" => Box::new(EnergyHeuristic),
        other => {
            return Err(DwaveError::InvalidArgument(format!(
                "unknown estimator {other}; expected oracle or energy"
            )))
        }
    };
    let records = read_manifest(manifest_path)?;
    let base = manifest_dir(manifest_path);
    std::fs::create_dir_all(out_dir)?;
    write_snapshot(
        out_dir,
        config,
        "filter",
        seed,
        &[
            ("threshold".into(), threshold.to_string()),
            ("estimator".into(), estimator_name.into()),
        ],
    )?;
    let (kept, report) = filter_manifest(&records, threshold, estimator.as_ref(), base)?;
    let kept: Vec<UtteranceRecord> = kept
        .into_iter()
        .map(|mut r| {
            r.clean_audio_path = absolutize(base, &r.clean_audio_path);
            if let Some(m) = &r.mixed_audio_path {
                r.mixed_audio_path = Some(absolutize(base, m));
            }
            r
        })
        .collect();
    write_manifest(out_dir.join("filtered.jsonl"), &kept)?;
    write_json(&out_dir.join("filter_report.json"), &report)?;
    println!(
        "{}: kept {}/{} utterances ({:.2} of {:.2} hours)",
        report.preset, report.kept, report.total, report.kept_hours, report.total_hours
    );
    Ok(0)
}
