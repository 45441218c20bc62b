use super::{QualityTags, SampleRecord};
use crate::audio::{detect_truncation, energy_vad, estimate_snr, spectral_rolloff, Waveform};
use crate::error::{Error, Result};

pub const DEFAULT_ROLLOFF_FRACTION: f64 = 0.85;

/// A tag producer. Plugins wrapping external models implement this too.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;

    /// Tags to merge into the record. Fields left `None` are untouched.
    fn score(&self, record: &SampleRecord, audio: &Waveform) -> Result<QualityTags>;
}

/// Fills `snr_db`; left absent when the split is not estimable.
pub struct SnrScorer;

impl Scorer for SnrScorer {
    fn name(&self) -> &str {
        "snr"
    }

    fn score(&self, _: &SampleRecord, audio: &Waveform) -> Result<QualityTags> {
        Ok(QualityTags {
            snr_db: estimate_snr(audio).ok(),
            ..Default::default()
        })
    }
}

pub struct RolloffScorer {
    pub fraction: f64,
}

impl Default for RolloffScorer {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_ROLLOFF_FRACTION,
        }
    }
}

impl Scorer for RolloffScorer {
    fn name(&self) -> &str {
        "rolloff"
    }

    fn score(&self, _: &SampleRecord, audio: &Waveform) -> Result<QualityTags> {
        let rolloff_hz = match spectral_rolloff(audio, self.fraction) {
            Ok(hz) => Some(hz),
            Err(Error::NotEstimable(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(QualityTags {
            rolloff_hz,
            ..Default::default()
        })
    }
}

pub struct TruncationScorer;

impl Scorer for TruncationScorer {
    fn name(&self) -> &str {
        "truncation"
    }

    fn score(&self, _: &SampleRecord, audio: &Waveform) -> Result<QualityTags> {
        Ok(QualityTags {
            truncated: Some(detect_truncation(audio).any()),
            ..Default::default()
        })
    }
}

/// Stand-in perceptual MOS: a fixed monotone map of SNR onto [1, 5].
pub fn mos_from_snr(snr_db: f64) -> f64 {
    (1.0 + 0.125 * snr_db).clamp(1.0, 5.0)
}

/// Deterministic pseudo-MOS from [`mos_from_snr`].
pub struct MosStub;

impl Scorer for MosStub {
    fn name(&self) -> &str {
        "mos_stub"
    }

    fn score(&self, _: &SampleRecord, audio: &Waveform) -> Result<QualityTags> {
        Ok(QualityTags {
            pseudo_mos: estimate_snr(audio).ok().map(mos_from_snr),
            ..Default::default()
        })
    }
}

/// Stand-in speech detector: any energy-VAD activity counts as speech.
pub struct SpeechStub;

impl Scorer for SpeechStub {
    fn name(&self) -> &str {
        "speech_stub"
    }

    fn score(&self, _: &SampleRecord, audio: &Waveform) -> Result<QualityTags> {
        Ok(QualityTags {
            is_speech: Some(!energy_vad(audio, 20.0, 30.0)?.is_empty()),
            ..Default::default()
        })
    }
}

#[derive(Default)]
pub struct ScorerSet {
    scorers: Vec<Box<dyn Scorer>>,
}

impl ScorerSet {
    pub const BUILTIN: [&'static str; 5] = ["snr", "rolloff", "truncation", "mos_stub", "speech_stub"];

    pub fn empty() -> Self {
        Self::default()
    }

    /// Every built-in scorer.
    pub fn builtin() -> Self {
        Self::from_names(&Self::BUILTIN).expect("builtin names resolve")
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut set = Self::empty();
        for n in names {
            let s: Box<dyn Scorer> = match n.as_ref() {
                "snr" => Box::new(SnrScorer),
                "rolloff" => Box::new(RolloffScorer::default()),
                "truncation" => Box::new(TruncationScorer),
                "mos_stub" => Box::new(MosStub),
                "speech_stub" => Box::new(SpeechStub),
                other => {
                    return Err(Error::Config(format!(
                        "unknown scorer `{other}`; valid: {}",
                        Self::BUILTIN.join(", ")
                    )))
                }
            };
            set.scorers.push(s);
        }
        Ok(set)
    }

    pub fn with(mut self, scorer: Box<dyn Scorer>) -> Self {
        self.scorers.push(scorer);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.scorers.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.scorers.iter().map(|s| s.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Scorer> {
        self.scorers.iter().map(|s| s.as_ref())
    }
}
