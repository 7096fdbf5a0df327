pub mod enhance;
pub mod eval;
pub mod features;
pub mod filter;
pub mod mix;
pub mod train;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use dwave::Result;

/// Absolute form of a manifest-relative path (manifests written into a new
/// directory keep referring to their sources).
pub fn absolutize(base: &Path, stored: &str) -> String {
    let p = Path::new(stored);
    if p.is_absolute() {
        stored.to_string()
    } else {
        base.join(p).display().to_string()
    }
}

#[derive(Debug, Serialize)]
pub struct ItemFailure {
    pub id: String,
    pub error: String,
}

/// Write per-item failures (if any) to `failures.jsonl` and return the count.
pub fn report_failures(out_dir: &Path, failures: &[ItemFailure]) -> Result<usize> {
    if failures.is_empty() {
        return Ok(0);
    }
    let mut file = std::fs::File::create(out_dir.join("failures.jsonl"))?;
    for failure in failures {
        serde_json::to_writer(&mut file, failure)?;
        file.write_all(b"\n")?;
    }
    for failure in failures {
        eprintln!("failed: {} ({})", failure.id, failure.error);
    }
    Ok(failures.len())
}

pub fn manifest_dir(manifest_path: &Path) -> &Path {
    manifest_path.parent().unwrap_or_else(|| Path::new("."))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}
