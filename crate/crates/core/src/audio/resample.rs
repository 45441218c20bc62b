use std::f64::consts::PI;

use super::Waveform;
use crate::error::Result;

/// Zero crossings of the sinc kernel on each side.
const HALF_TAPS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = target_rate as f64 / w.sample_rate as f64;
    let cutoff = ratio.min(1.0);
    let radius = HALF_TAPS / cutoff;
    let n_out = ((w.len() as f64 * ratio).round() as usize).max(1);
    let src = &w.samples;
    let out = (0..n_out)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = ((center - radius).ceil().max(0.0)) as usize;
            let hi = ((center + radius).floor() as usize).min(src.len() - 1);
            let mut acc = 0.0;
            for (i, &s) in src.iter().enumerate().take(hi + 1).skip(lo) {
                let d = i as f64 - center;
                let window = 0.5 + 0.5 * (PI * d / radius).cos();
                acc += s as f64 * cutoff * sinc(cutoff * d) * window;
            }
            acc as f32
        })
        .collect();
    Waveform::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_low_tone() {
        let src: Vec<f32> = (0..22050)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 22050.0).sin() as f32 * 0.5)
            .collect();
        let w = Waveform::new(src, 22050).unwrap();
        let r = resample(&w, 16000).unwrap();
        assert_eq!(r.len(), 16000);
        for i in 1000..15000 {
            let want = (2.0 * PI * 440.0 * i as f64 / 16000.0).sin() * 0.5;
            assert!((r.samples[i] as f64 - want).abs() < 5e-3, "sample {i}");
        }
    }
}
