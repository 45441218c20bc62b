use super::Waveform;
use crate::error::{Error, Result};

/// Speech intervals separated by less than this are merged.
pub const VAD_MERGE_GAP_S: f64 = 0.1;
/// Frame RMS at or below this is never speech, whatever the peak.
const SILENCE_RMS: f64 = 1e-6;
/// Reported when the non-speech partition is digitally silent.
pub const SNR_CAP_DB: f64 = 100.0;
const SNR_FRAME_MS: f64 = 20.0;
/// Minimum dB spread between the loudest and the quiet frames before a
/// speech/noise split is attempted.
const SNR_MIN_SPREAD_DB: f64 = 2.0;

/// Half-open time interval in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

fn frame_len(w: &Waveform, frame_ms: f64) -> usize {
    ((frame_ms * 1e-3 * w.sample_rate as f64).round() as usize).max(1)
}

/// RMS of consecutive non-overlapping frames; a trailing partial frame is
/// kept.
pub fn frame_rms(w: &Waveform, frame_ms: f64) -> Vec<f64> {
    w.samples
        .chunks(frame_len(w, frame_ms))
        .map(|c| (c.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

fn runs(active: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &a) in active.iter().chain(std::iter::once(&false)).enumerate() {
        match (a, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Frames whose RMS is within `thresh_db` of the loudest frame, as merged
/// time intervals.
pub fn energy_vad(w: &Waveform, frame_ms: f64, thresh_db: f64) -> Result<Vec<Interval>> {
    if !(frame_ms > 0.0) {
        return Err(Error::Contract(format!("frame_ms must be positive, got {frame_ms}")));
    }
    let rms = frame_rms(w, frame_ms);
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= SILENCE_RMS {
        return Ok(Vec::new());
    }
    let thresh = (peak * 10f64.powf(-thresh_db / 20.0)).max(SILENCE_RMS);
    let active: Vec<bool> = rms.iter().map(|&r| r > thresh).collect();
    let hop_s = frame_len(w, frame_ms) as f64 / w.sample_rate as f64;
    let mut merged: Vec<Interval> = Vec::new();
    for (a, b) in runs(&active) {
        let iv = Interval {
            start_s: a as f64 * hop_s,
            end_s: (b as f64 * hop_s).min(w.duration_s()),
        };
        match merged.last_mut() {
            Some(last) if iv.start_s - last.end_s < VAD_MERGE_GAP_S => last.end_s = iv.end_s,
            _ => merged.push(iv),
        }
    }
    Ok(merged)
}

/// Speech-to-noise power ratio in dB from an adaptive energy split.
///
/// Frames are classified against a threshold halfway (in dB) between the
/// loudest frame and the 10th-percentile frame. Frames touching a class
/// boundary are dropped from both classes. Noise power is taken as the
/// non-speech mean, and signal power as the speech-frame excess over it.
pub fn estimate_snr(w: &Waveform) -> Result<f64> {
    let power: Vec<f64> = frame_rms(w, SNR_FRAME_MS).iter().map(|r| r * r).collect();
    let db: Vec<f64> = power.iter().map(|&p| 10.0 * p.max(1e-20).log10()).collect();
    let mut sorted = db.clone();
    sorted.sort_by(f64::total_cmp);
    let peak = *sorted.last().ok_or_else(|| Error::NotEstimable("no frames".into()))?;
    let floor = sorted[sorted.len() / 10];
    if peak <= 10.0 * (SILENCE_RMS * SILENCE_RMS).log10() {
        return Err(Error::NotEstimable("waveform is silent".into()));
    }
    if peak - floor < SNR_MIN_SPREAD_DB {
        return Err(Error::NotEstimable(
            "no energy contrast between speech and non-speech frames".into(),
        ));
    }
    let thresh = 0.5 * (peak + floor);
    let speech: Vec<bool> = db.iter().map(|&d| d > thresh).collect();
    let n = speech.len();
    let interior = |i: usize| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        (lo..=hi).all(|j| speech[j] == speech[i])
    };
    let (mut ps, mut ns, mut pn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        if !interior(i) {
            continue;
        }
        if speech[i] {
            ps += power[i];
            ns += 1;
        } else {
            pn += power[i];
            nn += 1;
        }
    }
    if ns == 0 || nn == 0 {
        return Err(Error::NotEstimable(format!(
            "{ns} speech and {nn} non-speech frames"
        )));
    }
    let (ps, pn) = (ps / ns as f64, pn / nn as f64);
    if pn <= 1e-20 {
        return Ok(SNR_CAP_DB);
    }
    let excess = ps - pn;
    if excess <= 0.0 {
        return Err(Error::NotEstimable("speech frames are not louder than noise".into()));
    }
    Ok((10.0 * (excess / pn).log10()).min(SNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const SR: f64 = SAMPLE_RATE as f64;

    fn tone(n: usize) -> Vec<f32> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / SR).sin() as f32)
            .collect()
    }

    /// Gaussian noise of RMS `noise` everywhere plus a sine of RMS `sig`
    /// between 0.5 s and 1.5 s of a 2 s clip.
    fn mixture(sig: f64, noise: f64, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).unwrap();
        let amp = sig * 2f64.sqrt();
        let s = (0..32000)
            .map(|i| {
                let t = i as f64 / SR;
                let x = if (0.5..1.5).contains(&t) {
                    amp * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                } else {
                    0.0
                };
                (x + normal.sample(&mut rng)) as f32
            })
            .collect();
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn silence_has_no_speech() {
        assert!(energy_vad(&Waveform::silence(2.0, SAMPLE_RATE), 20.0, 30.0).unwrap().is_empty());
    }

    #[test]
    fn burst_is_located() {
        let mut s = vec![0.0f32; 32000];
        let t = tone(8000);
        s[8000..16000].copy_from_slice(&t);
        let iv = energy_vad(&Waveform::new(s, SAMPLE_RATE).unwrap(), 20.0, 30.0).unwrap();
        assert_eq!(iv.len(), 1);
        assert!((iv[0].start_s - 0.5).abs() <= 0.02);
        assert!((iv[0].end_s - 1.0).abs() <= 0.02);
    }

    #[test]
    fn close_bursts_merge() {
        let mut s = vec![0.0f32; 32000];
        let t = tone(4000);
        s[8000..12000].copy_from_slice(&t);
        s[12800..16800].copy_from_slice(&t);
        let iv = energy_vad(&Waveform::new(s, SAMPLE_RATE).unwrap(), 20.0, 30.0).unwrap();
        assert_eq!(iv.len(), 1);
    }

    #[test]
    fn snr_matches_construction() {
        for (k, &target) in [0.0, 6.0, 12.0, 20.0, 30.0].iter().enumerate() {
            let noise = 0.01;
            let sig = noise * 10f64.powf(target / 20.0);
            let got = estimate_snr(&mixture(sig, noise, k as u64)).unwrap();
            assert!((got - target).abs() <= 0.5, "target {target} got {got}");
        }
    }

    #[test]
    fn snr_needs_both_classes() {
        let steady = Waveform::new(tone(32000).iter().map(|s| s * 0.3).collect(), SAMPLE_RATE).unwrap();
        assert!(matches!(estimate_snr(&steady), Err(Error::NotEstimable(_))));
        assert!(matches!(
            estimate_snr(&Waveform::silence(1.0, SAMPLE_RATE)),
            Err(Error::NotEstimable(_))
        ));
    }
}
