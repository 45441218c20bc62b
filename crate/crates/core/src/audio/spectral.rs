use super::stft::Stft;
use super::vad::frame_rms;
use super::Waveform;
use crate::error::{Error, Result};

const ROLLOFF_N_FFT: usize = 1024;
const ROLLOFF_HOP: usize = 160;
const ROLLOFF_WIN: usize = 640;

/// Frequency below which `fraction` of the mean power spectrum lies.
///
/// The cumulative distribution is linearly interpolated between bin
/// centers, so the result is continuous in `fraction`.
pub fn spectral_rolloff(w: &Waveform, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Range(format!("rolloff fraction {fraction} not in (0, 1)")));
    }
    let stft = Stft::new(ROLLOFF_N_FFT, ROLLOFF_HOP, ROLLOFF_WIN.min(w.len()));
    let samples: Vec<f64> = w.samples.iter().map(|&s| s as f64).collect();
    let spectra = stft.magnitudes(&samples);
    let mut power = vec![0.0; stft.bins()];
    for frame in &spectra {
        for (p, m) in power.iter_mut().zip(frame) {
            *p += m * m;
        }
    }
    let total: f64 = power.iter().sum();
    if spectra.is_empty() || !(total > 1e-18 * spectra.len() as f64) {
        return Err(Error::NotEstimable("rolloff of a silent signal is undefined".into()));
    }
    let target = fraction * total;
    let bin_hz = w.sample_rate as f64 / ROLLOFF_N_FFT as f64;
    let mut cum = 0.0;
    for (k, &p) in power.iter().enumerate() {
        if cum + p >= target {
            let frac = if p > 0.0 { (target - cum) / p } else { 0.0 };
            return Ok(((k as f64 - 1.0 + frac).max(0.0)) * bin_hz);
        }
        cum += p;
    }
    Ok((power.len() - 1) as f64 * bin_hz)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationConfig {
    /// Length of the inspected edge and of the RMS frames.
    pub edge_ms: f64,
    /// Fraction of the loudest frame RMS an edge may reach.
    pub ratio: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            edge_ms: 20.0,
            ratio: 0.7,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Truncation {
    pub onset_truncated: bool,
    pub offset_truncated: bool,
}

impl Truncation {
    pub fn any(&self) -> bool {
        self.onset_truncated || self.offset_truncated
    }
}

/// Flags recordings that start or end mid-energy.
pub fn detect_truncation(w: &Waveform) -> Truncation {
    detect_truncation_with(w, &TruncationConfig::default())
}

pub fn detect_truncation_with(w: &Waveform, cfg: &TruncationConfig) -> Truncation {
    let rms = frame_rms(w, cfg.edge_ms);
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Truncation::default();
    }
    let edge = ((cfg.edge_ms * 1e-3 * w.sample_rate as f64).round() as usize).clamp(1, w.len());
    let edge_rms = |s: &[f32]| (s.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
    let limit = cfg.ratio * peak;
    Truncation {
        onset_truncated: edge_rms(&w.samples[..edge]) > limit,
        offset_truncated: edge_rms(&w.samples[w.len() - edge..]) > limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use proptest::prelude::*;

    fn sine(freq: f64, n: usize, phase: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64 + phase).sin()) as f32)
            .collect()
    }

    #[test]
    fn pure_tone_rolloff_within_a_bin() {
        let w = Waveform::new(sine(1000.0, 16000, 0.0), SAMPLE_RATE).unwrap();
        let bin = SAMPLE_RATE as f64 / 1024.0;
        for f in [0.5, 0.85, 0.95] {
            let r = spectral_rolloff(&w, f).unwrap();
            assert!((r - 1000.0).abs() <= bin, "fraction {f}: {r}");
        }
    }

    #[test]
    fn silent_rolloff_is_undefined() {
        let w = Waveform::silence(1.0, SAMPLE_RATE);
        assert!(matches!(spectral_rolloff(&w, 0.85), Err(Error::NotEstimable(_))));
        assert!(matches!(spectral_rolloff(&w, 1.0), Err(Error::Range(_))));
    }

    fn faded() -> Vec<f32> {
        let mut s = sine(300.0, 16000, 0.0);
        let ramp = 1600;
        let n = s.len();
        for i in 0..ramp {
            let g = i as f32 / ramp as f32;
            s[i] *= g;
            s[n - 1 - i] *= g;
        }
        s
    }

    #[test]
    fn faded_tone_is_complete() {
        let t = detect_truncation(&Waveform::new(faded(), SAMPLE_RATE).unwrap());
        assert_eq!(t, Truncation::default());
    }

    #[test]
    fn hard_cut_flags_onset() {
        let s = faded();
        let t = detect_truncation(&Waveform::new(s[8000..].to_vec(), SAMPLE_RATE).unwrap());
        assert!(t.onset_truncated);
        assert!(!t.offset_truncated);
    }

    #[test]
    fn silence_is_complete() {
        assert_eq!(detect_truncation(&Waveform::silence(1.0, SAMPLE_RATE)), Truncation::default());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rolloff_monotone_and_scale_free(freq in 200.0f64..6000.0, gain in 0.05f32..4.0, lo in 0.1f64..0.9) {
            let s: Vec<f32> = sine(freq, 4000, 0.3).iter().zip(sine(freq * 0.37, 4000, 1.0)).map(|(a, b)| a + b).collect();
            let w = Waveform::new(s.clone(), SAMPLE_RATE).unwrap();
            let scaled = Waveform::new(s.iter().map(|x| x * gain).collect(), SAMPLE_RATE).unwrap();
            let hi = (lo + 0.09).min(0.99);
            let a = spectral_rolloff(&w, lo).unwrap();
            prop_assert!(spectral_rolloff(&w, hi).unwrap() >= a);
            prop_assert!((spectral_rolloff(&scaled, lo).unwrap() - a).abs() < 1e-6);
        }
    }
}
