use super::stft::Stft;
use super::Waveform;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Affine map from natural-log mel energies to the model domain:
/// `(x - OFFSET) / SCALE`.
pub const MEL_NORM_OFFSET: f32 = -5.0;
pub const MEL_NORM_SCALE: f32 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MelConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 160,
            win: 640,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    /// `floor((len - win) / hop) + 1`, or zero when shorter than a window.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            (len - self.win) / self.hop + 1
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-spaced filters with unit peak.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `n_mels + 2` edge frequencies in Hz.
    edges: Vec<f64>,
    /// `n_mels x bins` weights.
    weights: Vec<Vec<f64>>,
    bin_hz: f64,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig, sample_rate: u32) -> Self {
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bins = cfg.n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
        let mut fb = Self {
            edges,
            weights: Vec::new(),
            bin_hz,
        };
        fb.weights = (0..cfg.n_mels)
            .map(|m| (0..bins).map(|k| fb.weight_at(m, k as f64 * bin_hz)).collect())
            .collect();
        fb
    }

    /// Continuous triangle response of filter `m` at `hz`.
    pub fn weight_at(&self, m: usize, hz: f64) -> f64 {
        let (l, c, r) = (self.edges[m], self.edges[m + 1], self.edges[m + 2]);
        let up = (hz - l) / (c - l);
        let down = (r - hz) / (r - c);
        up.min(down).max(0.0)
    }

    pub fn centers(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    pub fn apply(&self, magnitude: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(magnitude).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `frames x bins` natural-log mel energies.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(frames: usize, bins: usize, values: Vec<f32>) -> Result<Self> {
        if frames * bins != values.len() || frames == 0 || bins == 0 {
            return Err(Error::shape(
                "mel",
                format!("{frames} x {bins} vs {} values", values.len()),
            ));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.values[i * self.bins..(i + 1) * self.bins]
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::matrix(self.frames, self.bins, self.values.clone()).expect("shape holds")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        Self::new(t.rows(), t.cols(), t.data().to_vec())
    }

    /// Model-domain view, see [`MEL_NORM_OFFSET`].
    pub fn normalized(&self) -> Tensor<f32> {
        let data = self
            .values
            .iter()
            .map(|&v| (v - MEL_NORM_OFFSET) / MEL_NORM_SCALE)
            .collect();
        Tensor::matrix(self.frames, self.bins, data).expect("shape holds")
    }

    pub fn from_normalized<T: crate::numerics::Real>(t: &Tensor<T>) -> Result<Self> {
        let values = t
            .data()
            .iter()
            .map(|&v| v.f64() as f32 * MEL_NORM_SCALE + MEL_NORM_OFFSET)
            .collect();
        Self::new(t.rows(), t.cols(), values)
    }

    /// First `frames` frames.
    pub fn truncated(&self, frames: usize) -> Result<Self> {
        let frames = frames.min(self.frames);
        Self::new(frames, self.bins, self.values[..frames * self.bins].to_vec())
    }

    pub fn argmax_bin(&self, frame: usize) -> usize {
        let f = self.frame(frame);
        (0..self.bins)
            .max_by(|&a, &b| f[a].total_cmp(&f[b]))
            .unwrap_or(0)
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        let n = self.values.len().min(other.values.len()).max(1);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / n as f64
    }
}

/// Magnitude STFT, triangular mel filterbank, natural log with floor.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let frames = cfg.frame_count(w.len());
    if frames == 0 {
        return Err(Error::EmptyInput(format!(
            "{} samples is shorter than one {}-sample window",
            w.len(),
            cfg.win
        )));
    }
    let stft = Stft::new(cfg.n_fft, cfg.hop, cfg.win);
    let fb = MelFilterbank::new(cfg, w.sample_rate);
    let samples: Vec<f64> = w.samples.iter().map(|&s| s as f64).collect();
    let mut values = Vec::with_capacity(frames * cfg.n_mels);
    for mag in stft.magnitudes(&samples) {
        for e in fb.apply(&mag) {
            values.push(e.max(cfg.log_floor).ln() as f32);
        }
    }
    MelSpectrogram::new(frames, cfg.n_mels, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use proptest::prelude::*;

    fn sine(freq: f64, seconds: f64, amp: f64) -> Waveform {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let s = (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
            .collect();
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn silence_hits_floor() {
        let m = mel_spectrogram(&Waveform::silence(1.0, SAMPLE_RATE), &MelConfig::default()).unwrap();
        let floor = (1e-5f64).ln() as f32;
        assert!(m.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn one_second_gives_97_frames() {
        let m = mel_spectrogram(&Waveform::silence(1.0, SAMPLE_RATE), &MelConfig::default()).unwrap();
        assert_eq!(m.frames, (16000 - 640) / 160 + 1);
        assert_eq!(m.frames, 97);
        assert_eq!(m.bins, 80);
    }

    #[test]
    fn short_input_rejected() {
        let w = Waveform::new(vec![0.0; 639], SAMPLE_RATE).unwrap();
        assert!(matches!(mel_spectrogram(&w, &MelConfig::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn sine_peaks_in_covering_filter() {
        let cfg = MelConfig::default();
        let fb = MelFilterbank::new(&cfg, SAMPLE_RATE);
        let covering = (0..cfg.n_mels)
            .max_by(|&a, &b| fb.weight_at(a, 1000.0).total_cmp(&fb.weight_at(b, 1000.0)))
            .unwrap();
        assert!(fb.weight_at(covering, 1000.0) > 0.5);
        let m = mel_spectrogram(&sine(1000.0, 1.0, 0.5), &cfg).unwrap();
        for f in 0..m.frames {
            assert_eq!(m.argmax_bin(f), covering, "frame {f}");
        }
    }

    #[test]
    fn filter_edges_follow_htk_scale() {
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
        let fb = MelFilterbank::new(&MelConfig::default(), SAMPLE_RATE);
        let c = fb.centers();
        assert_eq!(c.len(), 80);
        assert!(c.windows(2).all(|p| p[1] > p[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn frame_count_formula(len in 640usize..6000) {
            let cfg = MelConfig::default();
            let w = Waveform::new(vec![0.01; len], SAMPLE_RATE).unwrap();
            let m = mel_spectrogram(&w, &cfg).unwrap();
            prop_assert_eq!(m.frames, (len - 640) / 160 + 1);
            prop_assert!(m.values.iter().all(|&v| v >= (1e-5f64).ln() as f32));
        }
    }
}
