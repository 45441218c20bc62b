use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Framed STFT without centering: frame `i` covers samples
/// `[i * hop, i * hop + win)`, windowed and zero-padded to `n_fft`.
pub struct Stft {
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize, win: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            win,
            window: hann_window(win),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            (len - self.win) / self.hop + 1
        }
    }

    /// Complex half spectra, one vector of `bins()` per frame.
    pub fn analyze(&self, samples: &[f64]) -> Vec<Vec<Complex<f64>>> {
        let frames = self.frame_count(samples.len());
        let mut out = Vec::with_capacity(frames);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for f in 0..frames {
            let start = f * self.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                buf[i] = Complex::new(samples[start + i] * w, 0.0);
            }
            self.forward.process(&mut buf);
            out.push(buf[..self.bins()].to_vec());
        }
        out
    }

    pub fn magnitudes(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        self.analyze(samples)
            .into_iter()
            .map(|frame| frame.into_iter().map(|c| c.norm()).collect())
            .collect()
    }

    /// Weighted overlap-add inverse of [`Stft::analyze`].
    pub fn synthesize(&self, spectra: &[Vec<Complex<f64>>]) -> Vec<f64> {
        if spectra.is_empty() {
            return Vec::new();
        }
        let len = (spectra.len() - 1) * self.hop + self.win;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for (f, half) in spectra.iter().enumerate() {
            for (k, c) in half.iter().enumerate() {
                buf[k] = *c;
                if k > 0 && k < self.n_fft - k {
                    buf[self.n_fft - k] = c.conj();
                }
            }
            self.inverse.process(&mut buf);
            let start = f * self.hop;
            for (i, w) in self.window.iter().enumerate() {
                out[start + i] += buf[i].re / self.n_fft as f64 * w;
                norm[start + i] += w * w;
            }
        }
        for (o, n) in out.iter_mut().zip(&norm) {
            if *n > 1e-8 {
                *o /= n;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_synthesis_round_trip() {
        let stft = Stft::new(1024, 160, 640);
        let x: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
        let y = stft.synthesize(&stft.analyze(&x));
        // Interior samples are fully covered by overlapping windows.
        for i in 700..7000 {
            assert!((x[i] - y[i]).abs() < 1e-9, "sample {i}");
        }
    }
}
