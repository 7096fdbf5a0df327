//! Versioned binary checkpoint container: header (magic, version, config),
//! then named tensors as little-endian 32-bit floats with explicit shapes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DwaveError, Result};

use super::tensor::Tensor;
use super::DenoiserConfig;

const MAGIC: &[u8; 4] = b"DWCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ContainerPayload {
    pub config: DenoiserConfig,
    pub step: u64,
    /// Free-form metadata (training stage, optimizer presence, ...).
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

fn format_err(path: &Path, reason: impl ToString) -> DwaveError {
    DwaveError::BadFormat {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Atomic write (temp file + rename).
pub fn write_container(path: impl AsRef<Path>, payload: &ContainerPayload) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let w = tmp.as_file_mut();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let config_json = serde_json::to_vec(&payload.config)?;
        w.write_all(&(config_json.len() as u32).to_le_bytes())?;
        w.write_all(&config_json)?;
        w.write_all(&payload.step.to_le_bytes())?;
        let meta_json = serde_json::to_vec(&payload.meta)?;
        w.write_all(&(meta_json.len() as u32).to_le_bytes())?;
        w.write_all(&meta_json)?;
        w.write_all(&(payload.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &payload.tensors {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            w.write_all(name_bytes)?;
            w.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
            for &dim in &tensor.shape {
                w.write_all(&(dim as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(tensor.data.len() * 4);
            for &v in &tensor.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| DwaveError::Io(e.error))?;
    Ok(())
}

fn read_u32(file: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    file.read_exact(&mut buf)
        .map_err(|_| format_err(path, format!("truncated at {what}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<ContainerPayload> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| format_err(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = read_u32(&mut file, path, "version")?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let config_len = read_u32(&mut file, path, "config length")? as usize;
    let mut config_json = vec![0u8; config_len];
    file.read_exact(&mut config_json)
        .map_err(|_| format_err(path, "truncated config"))?;
    let config: DenoiserConfig = serde_json::from_slice(&config_json)
        .map_err(|e| format_err(path, format!("bad config json: {e}")))?;
    let mut step_buf = [0u8; 8];
    file.read_exact(&mut step_buf)
        .map_err(|_| format_err(path, "truncated step"))?;
    let step = u64::from_le_bytes(step_buf);
    let meta_len = read_u32(&mut file, path, "meta length")? as usize;
    let mut meta_json = vec![0u8; meta_len];
    file.read_exact(&mut meta_json)
        .map_err(|_| format_err(path, "truncated meta"))?;
    let meta: serde_json::Value = serde_json::from_slice(&meta_json)
        .map_err(|e| format_err(path, format!("bad meta json: {e}")))?;

    let count = read_u32(&mut file, path, "tensor count")? as usize;
    let mut tensors = BTreeMap::new();
    for i in 0..count {
        let name_len = read_u32(&mut file, path, "tensor name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        file.read_exact(&mut name_bytes)
            .map_err(|_| format_err(path, format!("truncated name of tensor {i}")))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| format_err(path, format!("non-utf8 name of tensor {i}")))?;
        let ndim = read_u32(&mut file, path, "tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut file, path, "tensor dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 4];
        file.read_exact(&mut payload)
            .map_err(|_| format_err(path, format!("truncated data of tensor {name}")))?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.insert(name, Tensor::from_data(shape, data));
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(format_err(path, "trailing bytes after tensors"));
    }
    Ok(ContainerPayload { config, step, meta, tensors })
}
