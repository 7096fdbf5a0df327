//! Feature container (.featbin): magic "AVFT", u32 version, u32 L, u32 F,
//! f32 frame_rate, u8 view tag, then L*F little-endian f32 row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DwaveError, Result};

use super::{ConditionView, FeatureSequence};

const MAGIC: &[u8; 4] = b"AVFT";
const VERSION: u32 = 1;

fn format_err(path: &Path, reason: impl ToString) -> DwaveError {
    DwaveError::BadFormat {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Write a feature sequence. Values are stored as f32; the write is atomic.
pub fn write_features(path: impl AsRef<Path>, features: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let w = tmp.as_file_mut();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(features.frame_count() as u32).to_le_bytes())?;
        w.write_all(&(features.feature_dim() as u32).to_le_bytes())?;
        w.write_all(&(features.frame_rate as f32).to_le_bytes())?;
        w.write_all(&[features.view.tag()])?;
        let mut buf = Vec::with_capacity(features.data().len() * 4);
        for &v in features.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| DwaveError::Io(e.error))?;
    Ok(())
}

/// Read a feature container. Truncated files and unknown tags fail without
/// returning partial data.
pub fn load_precomputed_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| format_err(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file too short for header"))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    file.read_exact(&mut u32buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    let frames = u32::from_le_bytes(u32buf) as usize;
    file.read_exact(&mut u32buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    file.read_exact(&mut u32buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    let frame_rate = f32::from_le_bytes(u32buf) as f64;
    let mut tag = [0u8; 1];
    file.read_exact(&mut tag)
        .map_err(|_| format_err(path, "truncated header"))?;
    let view = ConditionView::from_tag(tag[0])
        .ok_or_else(|| format_err(path, format!("unknown view tag {}", tag[0])))?;

    let count = frames
        .checked_mul(dim)
        .ok_or_else(|| format_err(path, "L*F overflows"))?;
    let mut payload = vec![0u8; count * 4];
    file.read_exact(&mut payload)
        .map_err(|_| format_err(path, "truncated payload"))?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(format_err(path, "trailing bytes after payload"));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSequence::new(data, dim, frame_rate, view, id)
        .map_err(|e| format_err(path, format!("invalid payload: {e}")))
}
