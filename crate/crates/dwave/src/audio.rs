//! 16-bit PCM mono WAV input/output and peak normalization.

use std::path::Path;

use crate::error::{DwaveError, Result};

/// A mono waveform with samples in `[-1, 1]` and its sample rate.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn audio_err(path: &Path, reason: impl ToString) -> DwaveError {
    DwaveError::Audio {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Read a 16-bit PCM mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(path, format!("expected mono, got {} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio_err(path, "expected 16-bit PCM"));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| audio_err(path, e))?;
    Ok(Waveform {
        samples: samples.iter().map(|&s| s as f64 / 32768.0).collect(),
        sample_rate: spec.sample_rate,
    })
}

/// Write a waveform as 16-bit PCM mono. Samples are clamped to `[-1, 1]`
/// before quantization; the write is atomic (temp file + rename).
pub fn write_wav(path: impl AsRef<Path>, wav: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: wav.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer =
            hound::WavWriter::new(std::io::BufWriter::new(tmp.reopen()?), spec)
                .map_err(|e| audio_err(path, e))?;
        for &s in &wav.samples {
            // Scale by 32768 so integer samples survive a read/write cycle
            // exactly; clamp keeps +1.0 inside i16 range.
            let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(|e| audio_err(path, e))?;
        }
        writer.finalize().map_err(|e| audio_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| audio_err(path, e.error))?;
    Ok(())
}

/// Divide by the peak absolute sample and return `(normalized, scale)`.
/// The scale multiplies a synthesized waveform back to the source level.
/// All-zero input is returned unchanged with scale 1.
pub fn normalize_peak(samples: &[f64]) -> (Vec<f64>, f64) {
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak == 0.0 {
        return (samples.to_vec(), 1.0);
    }
    (samples.iter().map(|&s| s / peak).collect(), peak)
}
