//! JSON-lines manifests and quality-threshold filtering.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DwaveError, Result};

use super::{estimate_quality, QualityEstimator, UtteranceRecord};

/// One UtteranceRecord per line, UTF-8.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| DwaveError::Manifest(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord = serde_json::from_str(&line).map_err(|e| {
            DwaveError::Manifest(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Atomic write, input order preserved.
pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let w = tmp.as_file_mut();
        for record in records {
            record.validate()?;
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| DwaveError::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterReport {
    pub preset: String,
    pub estimator: String,
    pub threshold_db: f64,
    pub total: usize,
    pub kept: usize,
    pub kept_hours: f64,
    pub total_hours: f64,
}

fn preset_name(threshold_db: f64) -> String {
    if threshold_db.fract() == 0.0 {
        format!("av2wav-{}", threshold_db as i64)
    } else {
        format!("av2wav-{threshold_db}")
    }
}

/// Keep records whose quality score is strictly above the threshold.
/// Cached scores are reused; missing scores are computed with the given
/// estimator (in parallel, order preserved) and written back into the
/// returned records.
pub fn filter_manifest(
    manifest: &[UtteranceRecord],
    threshold_db: f64,
    estimator: &dyn QualityEstimator,
    manifest_dir: &Path,
) -> Result<(Vec<UtteranceRecord>, FilterReport)> {
    let scored: Vec<Result<UtteranceRecord>> = manifest
        .par_iter()
        .map(|record| {
            let mut record = record.clone();
            if record.quality_score.is_none() {
                estimate_quality(&mut record, estimator, manifest_dir)?;
            }
            Ok(record)
        })
        .collect();
    let mut kept = Vec::new();
    let mut kept_hours = 0.0;
    let mut total_hours = 0.0;
    let total = scored.len();
    for record in scored {
        let record = record?;
        total_hours += record.duration_s / 3600.0;
        if record.quality_score.expect("scored above") > threshold_db {
            kept_hours += record.duration_s / 3600.0;
            kept.push(record);
        }
    }
    let report = FilterReport {
        preset: preset_name(threshold_db),
        estimator: estimator.name().to_string(),
        threshold_db,
        total,
        kept: kept.len(),
        kept_hours,
        total_hours,
    };
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::{InterfererKind, OraclePair};

    struct CachedOnly;
    impl QualityEstimator for CachedOnly {
        fn name(&self) -> &'static str {
            "cached-only"
        }
        fn score(
            &self,
            _w: &crate::audio::Waveform,
            _r: Option<&crate::audio::Waveform>,
        ) -> Result<f64> {
            Err(DwaveError::InvalidArgument("no audio in this test".into()))
        }
    }

    fn record(id: &str, score: f64, duration_s: f64) -> UtteranceRecord {
        let mut r = UtteranceRecord::clean(id, format!("{id}.wav"), duration_s);
        r.quality_score = Some(score);
        r
    }

    #[test]
    fn threshold_is_strict_and_order_preserved() {
        let manifest = vec![
            record("a", 25.0, 3600.0),
            record("b", 20.0, 3600.0),
            record("c", 24.0, 1800.0),
        ];
        let (kept, report) =
            filter_manifest(&manifest, 23.0, &CachedOnly, Path::new(".")).unwrap();
        let ids: Vec<&str> = kept.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(report.kept, 2);
        assert_eq!(report.total, 3);
        assert!((report.kept_hours - 1.5).abs() < 1e-12);
        assert_eq!(report.preset, "av2wav-23");
    }

    #[test]
    fn boundary_score_is_dropped() {
        let manifest = vec![record("edge", 23.0, 60.0)];
        let (kept, _) = filter_manifest(&manifest, 23.0, &CachedOnly, Path::new(".")).unwrap();
        assert!(kept.is_empty());
    }

    #[test]
    fn all_below_threshold_gives_empty_manifest() {
        let manifest = vec![record("a", 1.0, 60.0), record("b", 2.0, 60.0)];
        let (kept, report) =
            filter_manifest(&manifest, 25.0, &CachedOnly, Path::new(".")).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.kept, 0);
        assert_eq!(report.kept_hours, 0.0);
        assert_eq!(report.preset, "av2wav-25");
    }

    #[test]
    fn filtering_is_idempotent() {
        let manifest = vec![
            record("a", 30.0, 10.0),
            record("b", 10.0, 10.0),
            record("c", 26.0, 10.0),
        ];
        let (once, _) = filter_manifest(&manifest, 23.0, &OraclePair, Path::new(".")).unwrap();
        let (twice, _) = filter_manifest(&once, 23.0, &OraclePair, Path::new(".")).unwrap();
        assert_eq!(once.len(), twice.len());
        for (x, y) in once.iter().zip(&twice) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.quality_score, y.quality_score);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut b = record("b", 5.5, 2.0);
        b.interferer_kind = InterfererKind::Noise;
        b.snr_db = Some(0.5);
        let records = vec![record("a", 10.0, 1.0), b];
        write_manifest(&path, &records).unwrap();
        let loaded = read_manifest(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].id, "a");
        assert_eq!(loaded[1].snr_db, Some(0.5));
        // rewrite is byte-identical
        let first = std::fs::read(&path).unwrap();
        write_manifest(&path, &loaded).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn invalid_manifest_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"id\": \"x\"}\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }
}
