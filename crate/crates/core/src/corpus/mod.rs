//! Deterministic synthetic multi-speaker corpus and the training-time
//! reference samplers.

mod samplers;
mod synth;

pub use samplers::{CrossSampler, MixedPromptSampler, PairedExample};
pub use synth::{synth_utterance, SyntheticSpeaker, CHAR_S, GAP_S};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::wav::write_wav;
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::curation::{write_manifest, QualityTags, SampleRecord};
use crate::error::{Error, Result};
use crate::text::{is_dialect, lang_index, EMOTIONS, MANDARIN, NEUTRAL};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
/// Noise-floor padding before and after every utterance.
pub const PAD_S: f64 = 0.2;
pub const NOISE_FLOOR_RMS: f64 = 1e-3;

/// Fixed phrase list; utterance `j` of every speaker reads phrase `j`.
pub const PHRASES: [&str; 32] = [
    "nihao", "xiexie", "zaijian", "haode", "mingtian", "pengyou", "kafei", "tianqi",
    "duibuqi", "meiguanxi", "huanying", "wanan", "zaoan", "shijie", "yinyue", "shuiguo",
    "hello", "thanks", "goodbye", "morning", "coffee", "weather", "friend", "music",
    "window", "garden", "river", "yellow", "summer", "pencil", "basket", "rocket",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub langs: Vec<String>,
    pub seed: u64,
    /// Extra records cut mid-tone at the start, for curation demos.
    pub truncated: usize,
    /// Cycle non-neutral emotions through every third utterance.
    pub emotions: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_speakers: 4,
            utts_per_speaker: 8,
            langs: vec![MANDARIN.into()],
            seed: 0,
            truncated: 0,
            emotions: false,
        }
    }
}

/// Speaker `s` of a corpus. Pitch and formants follow a low-discrepancy
/// sequence so every pair of speakers differs.
pub fn corpus_speaker(s: usize, lang: &str, seed: u64) -> SyntheticSpeaker {
    let golden = 0.618_033_988_75;
    let u = (s as f64 * golden + 0.1) % 1.0;
    let v = (s as f64 * 0.414_213_562 + 0.3) % 1.0;
    SyntheticSpeaker {
        speaker_id: format!("spk{s:02}"),
        f0_hz: 95.0 * (3.6f64).powf(u),
        formant_shift: 0.85 + 0.35 * v,
        lang: lang.into(),
        timbre_seed: seed.wrapping_mul(1_000_003).wrapping_add(s as u64),
    }
}

fn noise_seed(seed: u64, s: usize, j: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((s as u64) << 32 | j as u64)
}

/// Pads with a low noise floor and adds the same floor underneath.
pub fn with_noise_floor(w: &Waveform, seed: u64) -> Waveform {
    let pad = (PAD_S * w.sample_rate as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, NOISE_FLOOR_RMS).expect("valid std");
    let n = w.len() + 2 * pad;
    let samples = (0..n)
        .map(|i| {
            let s = if i >= pad && i < pad + w.len() { w.samples[i - pad] as f64 } else { 0.0 };
            (s + normal.sample(&mut rng)) as f32
        })
        .collect();
    Waveform { samples, sample_rate: w.sample_rate }
}

/// Language of utterance `j` for a speaker whose home variety is `lang`.
/// Dialect speakers alternate dialect and parallel Mandarin readings.
fn utterance_lang(lang: &str, j: usize) -> (String, usize) {
    if is_dialect(lang) {
        if j % 2 == 0 {
            (lang.to_string(), j / 2)
        } else {
            (MANDARIN.to_string(), j / 2)
        }
    } else {
        (lang.to_string(), j)
    }
}

fn emotion_for(j: usize, enabled: bool) -> &'static str {
    if !enabled || j % 3 != 2 {
        NEUTRAL
    } else {
        EMOTIONS[1 + (j / 3) % (EMOTIONS.len() - 1)]
    }
}

/// Writes `wavs/*.wav` and `manifest.jsonl` under `dir` and returns the
/// records. Output bytes depend only on `spec`.
pub fn make_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<Vec<SampleRecord>> {
    let dir = dir.as_ref();
    if spec.n_speakers == 0 || spec.utts_per_speaker == 0 {
        return Err(Error::Config("corpus needs at least one speaker and one utterance".into()));
    }
    if spec.langs.is_empty() {
        return Err(Error::Config("corpus needs at least one language".into()));
    }
    for l in &spec.langs {
        lang_index(l)?;
    }
    std::fs::create_dir_all(dir.join("wavs"))?;
    let mut records = Vec::new();
    let mut clean: Vec<(SampleRecord, Waveform)> = Vec::new();
    for s in 0..spec.n_speakers {
        let spk = corpus_speaker(s, &spec.langs[s % spec.langs.len()], spec.seed);
        for j in 0..spec.utts_per_speaker {
            let (lang, phrase) = utterance_lang(&spk.lang, j);
            let text = PHRASES[phrase % PHRASES.len()];
            let emo = emotion_for(j, spec.emotions);
            let voice = SyntheticSpeaker { lang: lang.clone(), ..spk.clone() };
            let dry = synth_utterance(&voice, text, emo, noise_seed(spec.seed, s, j) ^ 1)?;
            let w = with_noise_floor(&dry, noise_seed(spec.seed, s, j));
            let id = format!("{}_utt{j:03}", spk.speaker_id);
            let rec = SampleRecord {
                id: id.clone(),
                audio_path: format!("wavs/{id}.wav"),
                text: text.into(),
                speaker_id: spk.speaker_id.clone(),
                lang,
                emo: Some(emo.into()),
                duration_s: w.duration_s(),
                tags: QualityTags::default(),
                kept: None,
                reject_reason: None,
            };
            write_wav(dir.join(&rec.audio_path), &w)?;
            clean.push((rec.clone(), w));
            records.push(rec);
        }
    }
    let pad = (PAD_S * SAMPLE_RATE as f64) as usize;
    for k in 0..spec.truncated {
        let (src, w) = &clean[k % clean.len()];
        // Start 30 ms into the first character's plateau.
        let cut = w.slice(pad + (0.03 * SAMPLE_RATE as f64) as usize, w.len())?;
        let id = format!("{}_trunc{k:03}", src.id);
        let rec = SampleRecord {
            id: id.clone(),
            audio_path: format!("wavs/{id}.wav"),
            duration_s: cut.duration_s(),
            ..src.clone()
        };
        write_wav(dir.join(&rec.audio_path), &cut)?;
        records.push(rec);
    }
    write_manifest(dir.join(MANIFEST_NAME), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speakers_are_distinct_and_in_range() {
        let spk: Vec<_> = (0..16).map(|s| corpus_speaker(s, "zh", 0)).collect();
        for (i, a) in spk.iter().enumerate() {
            assert!((80.0..=400.0).contains(&a.f0_hz));
            for b in &spk[i + 1..] {
                assert!(a.f0_hz != b.f0_hz || a.formant_shift != b.formant_shift);
            }
        }
    }

    #[test]
    fn counts_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = CorpusSpec { n_speakers: 4, utts_per_speaker: 8, ..Default::default() };
        let ra = make_corpus(a.path(), &spec).unwrap();
        make_corpus(b.path(), &spec).unwrap();
        assert_eq!(ra.len(), 32);
        let ids: std::collections::BTreeSet<_> = ra.iter().map(|r| r.speaker_id.clone()).collect();
        assert_eq!(ids.len(), 4);
        let read = |d: &Path, p: &str| std::fs::read(d.join(p)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_NAME), read(b.path(), MANIFEST_NAME));
        for r in &ra {
            assert_eq!(read(a.path(), &r.audio_path), read(b.path(), &r.audio_path));
        }
    }
}
