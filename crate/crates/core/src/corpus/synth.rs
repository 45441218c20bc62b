use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::text::{emo_index, is_dialect, parse_text, Paraling, TextUnit, DIALECTS};

pub const CHAR_S: f64 = 0.08;
pub const GAP_S: f64 = 0.05;
const RAMP_S: f64 = 0.01;
/// RMS of a voiced segment before emotion gain.
const SEGMENT_RMS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub formant_shift: f64,
    pub lang: String,
    pub timbre_seed: u64,
}

impl SyntheticSpeaker {
    pub fn validate(&self) -> Result<()> {
        if !(80.0..=400.0).contains(&self.f0_hz) {
            return Err(Error::Config(format!(
                "speaker {}: f0 {} Hz outside [80, 400]",
                self.speaker_id, self.f0_hz
            )));
        }
        if !(self.formant_shift > 0.0) {
            return Err(Error::Config(format!("speaker {}: formant_shift must be positive", self.speaker_id)));
        }
        Ok(())
    }

    /// Per-harmonic gains, fixed by the timbre seed.
    fn timbre(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.timbre_seed);
        (0..64).map(|_| rng.random_range(0.6..1.4)).collect()
    }
}

/// Pitch offset in semitones, start-to-end glide in semitones, energy gain.
fn emotion_style(emo: &str) -> (f64, f64, f64) {
    const TABLE: [(f64, f64, f64); 12] = [
        (0.0, 0.0, 1.0),
        (1.5, 1.0, 1.15),
        (-1.5, -0.8, 0.8),
        (0.8, -1.2, 1.3),
        (1.2, 0.6, 0.85),
        (-0.8, -0.4, 0.95),
        (-0.5, 0.0, 1.05),
        (2.0, 2.0, 1.2),
        (-0.3, 0.5, 0.9),
        (-1.8, -0.3, 0.75),
        (-1.0, -1.5, 1.1),
        (-0.6, 0.2, 0.7),
    ];
    TABLE[emo_index(emo).unwrap_or(0)]
}

/// Extra glide in semitones and duration factor of a dialect.
fn dialect_style(lang: &str) -> (f64, f64) {
    match DIALECTS.iter().position(|&d| d == lang) {
        Some(i) => {
            let glide = [-2.0, -1.0, 1.0, 2.0][i % 4] * (1.0 + (i / 4) as f64 * 0.25);
            let stretch = [0.9, 1.0, 1.15][i % 3];
            (glide, stretch)
        }
        None => (0.0, 1.0),
    }
}

/// `(F1, F2)` of the vowel class a character maps to.
fn vowel(c: char) -> (f64, f64) {
    const V: [(f64, f64); 5] = [(800.0, 1200.0), (500.0, 1900.0), (300.0, 2300.0), (500.0, 900.0), (350.0, 800.0)];
    V[(c as u32 as usize * 3) % 5]
}

fn char_semitones(c: char) -> f64 {
    ((c as u32 * 7) % 7) as f64 - 3.0
}

fn formant_gain(f: f64, f1: f64, f2: f64, shift: f64) -> f64 {
    let peak = |center: f64, bw: f64| (-((f - center * shift) / bw).powi(2)).exp();
    0.05 + peak(f1, 250.0) + 0.7 * peak(f2, 350.0) + 0.3 * peak(2600.0, 450.0)
}

fn raised_cosine_ramp(i: usize, n: usize) -> f64 {
    let r = (RAMP_S * SAMPLE_RATE as f64) as usize;
    let edge = i.min(n - 1 - i);
    if edge >= r {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / r as f64).cos()
    }
}

struct Voice<'a> {
    spk: &'a SyntheticSpeaker,
    timbre: Vec<f64>,
    pitch_semis: f64,
    glide_semis: f64,
    gain: f64,
}

impl Voice<'_> {
    fn voiced(&self, c: char, n: usize, am_hz: Option<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let sr = SAMPLE_RATE as f64;
        let (f1, f2) = vowel(c);
        let base = self.spk.f0_hz * 2f64.powf((char_semitones(c) + self.pitch_semis) / 12.0);
        let n_harm = ((6500.0 / base) as usize).clamp(1, self.timbre.len());
        let amps: Vec<f64> = (1..=n_harm)
            .map(|h| formant_gain(h as f64 * base, f1, f2, self.spk.formant_shift) * self.timbre[h - 1] / h as f64)
            .collect();
        let norm = (amps.iter().map(|a| a * a).sum::<f64>() / 2.0).sqrt();
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut phase_acc = 0.0;
        (0..n)
            .map(|i| {
                let frac = i as f64 / n as f64;
                let f0 = base * 2f64.powf(self.glide_semis * (frac - 0.5) / 12.0);
                phase_acc += 2.0 * PI * f0 / sr;
                let mut s: f64 = amps
                    .iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(h, (a, p))| a * ((h + 1) as f64 * phase_acc + p).sin())
                    .sum();
                s *= SEGMENT_RMS * self.gain / norm;
                if let Some(am) = am_hz {
                    s *= 0.55 + 0.45 * (2.0 * PI * am * i as f64 / sr).sin();
                }
                s * raised_cosine_ramp(i, n)
            })
            .collect()
    }

    fn event(&self, p: Paraling, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let sr = SAMPLE_RATE as f64;
        match p {
            Paraling::Breath | Paraling::Cough => {
                let (level, decay) = if p == Paraling::Breath { (0.03, 0.0) } else { (0.15, 30.0) };
                (0..n)
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * level * (-decay * i as f64 / sr).exp() * raised_cosine_ramp(i, n)
                    })
                    .collect()
            }
            Paraling::Laugh => self.voiced('a', n, Some(9.0), rng),
            Paraling::Cry => self.voiced('u', n, Some(4.0), rng),
            Paraling::LaughSpanBegin | Paraling::LaughSpanEnd => Vec::new(),
        }
    }
}

/// Renders text as per-character harmonic tones: 80 ms per character (scaled
/// for dialects) with 50 ms gaps. Whitespace renders as silence.
pub fn synth_utterance(spk: &SyntheticSpeaker, text: &str, emo: &str, seed: u64) -> Result<Waveform> {
    spk.validate()?;
    emo_index(emo)?;
    let units = parse_text(text);
    if units.iter().all(|u| matches!(u, TextUnit::Marker(Paraling::LaughSpanBegin | Paraling::LaughSpanEnd))) {
        return Err(Error::EmptyInput("utterance text is empty".into()));
    }
    let (pitch, emo_glide, gain) = emotion_style(emo);
    let (dia_glide, stretch) = if is_dialect(&spk.lang) { dialect_style(&spk.lang) } else { (0.0, 1.0) };
    let voice = Voice {
        spk,
        timbre: spk.timbre(),
        pitch_semis: pitch,
        glide_semis: emo_glide + dia_glide,
        gain,
    };
    let sr = SAMPLE_RATE as f64;
    let seg = (CHAR_S * stretch * sr).round() as usize;
    let gap = (GAP_S * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = Vec::new();
    let mut in_span = false;
    let mut first = true;
    for u in units {
        let piece = match u {
            TextUnit::Marker(Paraling::LaughSpanBegin) => {
                in_span = true;
                continue;
            }
            TextUnit::Marker(Paraling::LaughSpanEnd) => {
                in_span = false;
                continue;
            }
            TextUnit::Marker(p) => voice.event(p, seg, &mut rng),
            TextUnit::Char(c) if c.is_whitespace() => vec![0.0; seg],
            TextUnit::Char(c) => voice.voiced(c, seg, in_span.then_some(6.0), &mut rng),
        };
        if !first {
            out.extend(std::iter::repeat_n(0.0, gap));
        }
        first = false;
        out.extend(piece);
    }
    Waveform::new(out.into_iter().map(|s| s as f32).collect(), SAMPLE_RATE)
}
