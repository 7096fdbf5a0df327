//! SNR-controlled interferer mixing. The interferer is rescaled so the
//! speech-to-interferer power ratio over the overlapped region equals the
//! requested SNR exactly.

use crate::audio::Waveform;
use crate::error::{DwaveError, Result};
use crate::rng::Prng;

use super::InterfererKind;

/// Uniform SNR draw per interferer type: speech on [-15, 5] dB, noise on
/// [-10, 10] dB.
pub fn sample_snr(kind: InterfererKind, rng: &mut Prng) -> Result<f64> {
    match kind {
        InterfererKind::Speech => Ok(rng.uniform(-15.0, 5.0)),
        InterfererKind::Noise => Ok(rng.uniform(-10.0, 10.0)),
        InterfererKind::None => Err(DwaveError::InvalidArgument(
            "cannot draw an SNR for interferer kind none".into(),
        )),
    }
}

/// Loop an interferer out to `len` samples, crossfading `crossfade` samples
/// at each seam to avoid clicks.
pub(crate) fn loop_to_length(interferer: &[f64], len: usize, crossfade: usize) -> Vec<f64> {
    if interferer.len() >= len {
        return interferer[..len].to_vec();
    }
    let mut out = interferer.to_vec();
    while out.len() < len {
        let fade = crossfade.min(out.len()).min(interferer.len());
        let seam = out.len() - fade;
        for i in 0..fade {
            let w = (i + 1) as f64 / (fade + 1) as f64;
            out[seam + i] = out[seam + i] * (1.0 - w) + interferer[i] * w;
        }
        out.extend_from_slice(&interferer[fade..]);
    }
    out.truncate(len);
    out
}

#[derive(Debug, Clone)]
pub struct MixOutput {
    pub mixed: Waveform,
    /// Gain applied to the interferer.
    pub interferer_scale: f64,
}

/// Mix `interferer` into `speech` at the requested SNR. A short interferer
/// is looped with a 10 ms crossfade; the output has the speech length.
pub fn mix_at_snr(speech: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<MixOutput> {
    if speech.sample_rate != interferer.sample_rate {
        return Err(DwaveError::InvalidArgument(format!(
            "sample rate mismatch {} vs {}",
            speech.sample_rate, interferer.sample_rate
        )));
    }
    if speech.is_empty() {
        return Err(DwaveError::InvalidArgument("empty speech".into()));
    }
    let speech_pow: f64 =
        speech.samples.iter().map(|&v| v * v).sum::<f64>() / speech.len() as f64;
    if speech_pow == 0.0 {
        return Err(DwaveError::InvalidArgument("all-zero speech".into()));
    }
    if !snr_db.is_finite() {
        return Err(DwaveError::InvalidArgument(format!("non-finite SNR {snr_db}")));
    }
    let crossfade = (speech.sample_rate as usize) / 100;
    let looped = loop_to_length(&interferer.samples, speech.len(), crossfade);
    let interferer_pow: f64 = looped.iter().map(|&v| v * v).sum::<f64>() / looped.len() as f64;
    if interferer_pow == 0.0 {
        return Err(DwaveError::InvalidArgument(
            "all-zero interferer with finite requested SNR".into(),
        ));
    }
    // 10 log10(P_speech / (k^2 P_interferer)) = snr_db
    let scale = (speech_pow / (interferer_pow * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = speech
        .samples
        .iter()
        .zip(&looped)
        .map(|(&s, &n)| s + scale * n)
        .collect();
    Ok(MixOutput {
        mixed: Waveform::new(mixed, speech.sample_rate),
        interferer_scale: scale,
    })
}

/// Achieved SNR of a mix given the original sources; used to verify the
/// by-construction contract.
pub fn measured_snr(speech: &[f64], scaled_interferer: &[f64]) -> f64 {
    let sp: f64 = speech.iter().map(|&v| v * v).sum();
    let ip: f64 = scaled_interferer.iter().map(|&v| v * v).sum();
    10.0 * (sp / ip).log10()
}
