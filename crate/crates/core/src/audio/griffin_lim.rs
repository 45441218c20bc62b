use nalgebra::DMatrix;
use rustfft::num_complex::Complex;

use super::mel::{MelConfig, MelFilterbank, MelSpectrogram};
use super::stft::Stft;
use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const GL_OUTPUT_PEAK: f32 = 0.9;

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Peak-normalized to [`GL_OUTPUT_PEAK`].
    pub waveform: Waveform,
    /// Absolute peak before normalization.
    pub raw_peak: f64,
}

/// Linear magnitudes from log-mel via the filterbank pseudo-inverse.
pub fn mel_to_linear(m: &MelSpectrogram, cfg: &MelConfig, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    if m.bins != cfg.n_mels {
        return Err(Error::shape(
            "griffin_lim",
            format!("{} mel bins, config expects {}", m.bins, cfg.n_mels),
        ));
    }
    let fb = MelFilterbank::new(cfg, sample_rate);
    let bins = cfg.n_fft / 2 + 1;
    let w = DMatrix::from_fn(cfg.n_mels, bins, |i, j| fb.weights()[i][j]);
    let pinv = w
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::Contract(format!("mel pseudo-inverse: {e}")))?;
    Ok((0..m.frames)
        .map(|f| {
            let e = nalgebra::DVector::from_iterator(
                m.bins,
                m.frame(f).iter().map(|&v| (v as f64).exp()),
            );
            (&pinv * e).iter().map(|&x| x.max(0.0)).collect()
        })
        .collect())
}

/// Iterative phase recovery from a log-mel spectrogram with default framing.
pub fn griffin_lim(m: &MelSpectrogram, iters: usize) -> Result<Reconstruction> {
    griffin_lim_with(m, iters, &MelConfig::default(), SAMPLE_RATE)
}

pub fn griffin_lim_with(
    m: &MelSpectrogram,
    iters: usize,
    cfg: &MelConfig,
    sample_rate: u32,
) -> Result<Reconstruction> {
    if iters == 0 {
        return Err(Error::Contract("griffin_lim needs at least one iteration".into()));
    }
    let mags = mel_to_linear(m, cfg, sample_rate)?;
    let stft = Stft::new(cfg.n_fft, cfg.hop, cfg.win);
    // Deterministic start: zero phase.
    let mut spectra: Vec<Vec<Complex<f64>>> = mags
        .iter()
        .map(|f| f.iter().map(|&a| Complex::new(a, 0.0)).collect())
        .collect();
    let mut signal = stft.synthesize(&spectra);
    for _ in 1..iters {
        let estimate = stft.analyze(&signal);
        for (target, (est, mag)) in spectra.iter_mut().zip(estimate.iter().zip(&mags)) {
            for ((t, e), &a) in target.iter_mut().zip(est).zip(mag) {
                let n = e.norm();
                *t = if n > 1e-12 { e * (a / n) } else { Complex::new(a, 0.0) };
            }
        }
        signal = stft.synthesize(&spectra);
    }
    let raw_peak = signal.iter().fold(0.0f64, |p, s| p.max(s.abs()));
    let gain = if raw_peak > 0.0 { GL_OUTPUT_PEAK as f64 / raw_peak } else { 1.0 };
    let samples = signal.iter().map(|&s| (s * gain) as f32).collect();
    Ok(Reconstruction {
        waveform: Waveform::new(samples, sample_rate)?,
        raw_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::mel_spectrogram;

    fn sine_mel(freq: f64) -> MelSpectrogram {
        let s = (0..8000)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect();
        mel_spectrogram(&Waveform::new(s, SAMPLE_RATE).unwrap(), &MelConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_keeps_dominant_bin() {
        let m = sine_mel(1000.0);
        let r = griffin_lim(&m, 60).unwrap();
        assert!((r.waveform.peak() - GL_OUTPUT_PEAK).abs() < 1e-6);
        let back = mel_spectrogram(&r.waveform, &MelConfig::default()).unwrap();
        let mid = m.frames / 2;
        assert_eq!(back.argmax_bin(mid), m.argmax_bin(mid));
    }

    #[test]
    fn floor_mel_is_near_silent() {
        let floor = (1e-5f64).ln() as f32;
        let m = MelSpectrogram::new(40, 80, vec![floor; 40 * 80]).unwrap();
        assert!(griffin_lim(&m, 10).unwrap().raw_peak < 1e-2);
    }

    #[test]
    fn more_iterations_do_not_hurt() {
        let m = sine_mel(700.0);
        let err = |iters| {
            let r = griffin_lim(&m, iters).unwrap();
            // Compare at matched loudness: undo normalization first.
            let w = Waveform::new(
                r.waveform.samples.iter().map(|&s| s * (r.raw_peak as f32 / GL_OUTPUT_PEAK)).collect(),
                SAMPLE_RATE,
            )
            .unwrap();
            mel_spectrogram(&w, &MelConfig::default()).unwrap().mean_abs_diff(&m)
        };
        assert!(err(60) <= err(1));
    }
}
