//! Waveform-level signal processing: log-mel features, the energy-based
//! scorers behind the curation pipeline, Griffin-Lim reconstruction and WAV
//! I/O.

mod griffin_lim;
mod mel;
mod resample;
mod spectral;
mod stft;
mod vad;
pub mod wav;

pub use griffin_lim::{griffin_lim, griffin_lim_with, mel_to_linear, Reconstruction, GL_OUTPUT_PEAK};
pub use mel::{
    hz_to_mel, mel_spectrogram, mel_to_hz, MelConfig, MelFilterbank, MelSpectrogram, MEL_NORM_OFFSET, MEL_NORM_SCALE,
};
pub use resample::resample;
pub use spectral::{detect_truncation, detect_truncation_with, spectral_rolloff, Truncation, TruncationConfig};
pub use stft::{hann_window, Stft};
pub use vad::{energy_vad, estimate_snr, frame_rms, Interval, SNR_CAP_DB, VAD_MERGE_GAP_S};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// Mel frames per second with the default hop.
pub const MEL_FPS: usize = 100;
/// Mel frames per semantic token (100 fps mel vs 25 Hz tokens).
pub const MEL_FRAMES_PER_TOKEN: usize = 4;

/// Mono PCM signal with samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = ((seconds * sample_rate as f64).round() as usize).max(1);
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
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

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        let p: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (p / self.samples.len() as f64).sqrt()
    }

    /// Scales so the absolute peak equals `target` (no-op on silence).
    pub fn peak_normalized(&self, target: f32) -> Self {
        let p = self.peak();
        let gain = if p > 0.0 { target / p } else { 1.0 };
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.samples.len());
        if start >= end {
            return Err(Error::EmptyInput(format!("slice {start}..{end}")));
        }
        Self::new(self.samples[start..end].to_vec(), self.sample_rate)
    }
}
