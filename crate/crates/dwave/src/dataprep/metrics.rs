//! Reference-based quality metrics.

use crate::audio::Waveform;
use crate::conditioning::{extract_melproxy_features, ConditionView, MelConfig};
use crate::error::{DwaveError, Result};

/// Scale-invariant signal-to-distortion ratio in dB: the reference is
/// rescaled by `alpha = <est, ref> / ||ref||^2` and the ratio of scaled
/// reference power to error power is returned. Clamped to +100 dB when the
/// error power underflows (and to -100 dB on the other side so corpus means
/// stay finite).
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(DwaveError::ShapeMismatch(format!(
            "estimate length {} != reference length {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_pow: f64 = reference.iter().map(|&v| v * v).sum();
    if ref_pow == 0.0 {
        return Err(DwaveError::InvalidArgument("all-zero reference".into()));
    }
    let inner: f64 = estimate.iter().zip(reference).map(|(&e, &r)| e * r).sum();
    let alpha = inner / ref_pow;
    let signal_pow = alpha * alpha * ref_pow;
    let error_pow: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = alpha * r - e;
            d * d
        })
        .sum();
    if error_pow <= signal_pow * 1e-10 {
        return Ok(100.0);
    }
    if signal_pow == 0.0 {
        return Ok(-100.0);
    }
    Ok((10.0 * (signal_pow / error_pow).log10()).clamp(-100.0, 100.0))
}

/// Mean absolute difference between the log mel features of two waveforms,
/// truncated to the shorter frame count.
pub fn log_mel_distance(a: &Waveform, b: &Waveform, mel: &MelConfig) -> Result<f64> {
    let fa = extract_melproxy_features(a, mel, ConditionView::A, "a")?;
    let fb = extract_melproxy_features(b, mel, ConditionView::A, "b")?;
    let frames = fa.frame_count().min(fb.frame_count());
    if frames == 0 {
        return Err(DwaveError::InvalidArgument("no frames to compare".into()));
    }
    let dim = fa.feature_dim();
    let mut total = 0.0;
    for t in 0..frames {
        for (x, y) in fa.frame(t).iter().zip(fb.frame(t)) {
            total += (x - y).abs();
        }
    }
    Ok(total / (frames * dim) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    #[test]
    fn identical_signals_clamp_high() {
        let s = vec![0.5, -0.25, 0.75, 0.1];
        assert_eq!(si_sdr(&s, &s).unwrap(), 100.0);
    }

    #[test]
    fn scaled_estimate_is_invariant() {
        let s = vec![0.5, -0.25, 0.75, 0.1];
        let double: Vec<f64> = s.iter().map(|&v| 2.0 * v).collect();
        assert_eq!(si_sdr(&double, &s).unwrap(), si_sdr(&s, &s).unwrap());
    }

    #[test]
    fn hand_example_zero_db() {
        // alpha = 1, signal power 1, error power 1
        assert!((si_sdr(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_reference_and_mismatch() {
        assert!(si_sdr(&[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(si_sdr(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn scale_invariance_property() {
        let mut rng = Prng::seed_from_u64(3);
        let reference = rng.standard_normal_vec(500);
        let estimate: Vec<f64> = reference
            .iter()
            .map(|&r| r + 0.1 * rng.standard_normal())
            .collect();
        let base = si_sdr(&estimate, &reference).unwrap();
        for k in [0.1, 1.0, 10.0] {
            let scaled: Vec<f64> = estimate.iter().map(|&e| k * e).collect();
            let got = si_sdr(&scaled, &reference).unwrap();
            assert!((got - base).abs() < 1e-6, "k={k}: {got} vs {base}");
        }
    }

    #[test]
    fn mel_distance_zero_for_identical_audio() {
        let mut rng = Prng::seed_from_u64(4);
        let wav = Waveform::new(rng.standard_normal_vec(8000), 8000);
        let mel = MelConfig::desk_8k(16);
        assert_eq!(log_mel_distance(&wav, &wav, &mel).unwrap(), 0.0);
    }

    #[test]
    fn mel_distance_grows_with_noise() {
        let mut rng = Prng::seed_from_u64(5);
        let clean: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 8000.0).sin() * 0.5)
            .collect();
        let light: Vec<f64> = clean.iter().map(|&v| v + 0.01 * rng.standard_normal()).collect();
        let heavy: Vec<f64> = clean.iter().map(|&v| v + 0.3 * rng.standard_normal()).collect();
        let mel = MelConfig::desk_8k(16);
        let wav = |s: Vec<f64>| Waveform::new(s, 8000);
        let d_light = log_mel_distance(&wav(light), &wav(clean.clone()), &mel).unwrap();
        let d_heavy = log_mel_distance(&wav(heavy), &wav(clean), &mel).unwrap();
        assert!(d_light < d_heavy);
    }
}
