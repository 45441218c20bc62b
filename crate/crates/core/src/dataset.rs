//! Corpus records turned into model-ready features: mel, semantic tokens,
//! speaker embedding and content frames per utterance.

use std::path::Path;

use rayon::prelude::*;

use crate::ar::{assemble, ArInput, Condition, Variant};
use crate::audio::wav::read_wav;
use crate::audio::{mel_spectrogram, MelConfig, MelSpectrogram, MEL_FRAMES_PER_TOKEN};
use crate::conditioner::{ContentFeatures, Featurizer, SpeakerEmbedding};
use crate::curation::{resolve_audio_path, SampleRecord};
use crate::error::{Error, Result};
use crate::fsq::{TokenSequence, Tokenizer};

#[derive(Clone, Debug)]
pub struct Utterance {
    pub record: SampleRecord,
    /// Cut to exactly four frames per token.
    pub mel: MelSpectrogram,
    pub tokens: TokenSequence,
    pub s: SpeakerEmbedding,
    pub content: ContentFeatures,
}

impl Utterance {
    pub fn from_mel(record: SampleRecord, mel: MelSpectrogram, tokenizer: &Tokenizer, featurizer: &Featurizer) -> Result<Self> {
        let tokens = tokenizer.tokenize_mel(&mel)?;
        if tokens.is_empty() {
            return Err(Error::EmptyInput(format!("{} yields no tokens", record.id)));
        }
        let s = featurizer.speaker_from_mel(&mel)?;
        let content = featurizer.content_from_mel(&mel)?;
        let mel = mel.truncated(tokens.len() * MEL_FRAMES_PER_TOKEN)?;
        Ok(Self {
            record,
            mel,
            tokens,
            s,
            content,
        })
    }
}

/// Loads every record's audio relative to `base_dir` and featurizes it.
pub fn load_utterances(
    records: &[SampleRecord],
    base_dir: &Path,
    tokenizer: &Tokenizer,
    featurizer: &Featurizer,
) -> Result<Vec<Utterance>> {
    records
        .par_iter()
        .map(|r| {
            let w = read_wav(resolve_audio_path(base_dir, &r.audio_path))?;
            let mel = mel_spectrogram(&w, &MelConfig::default())?;
            Utterance::from_mel(r.clone(), mel, tokenizer, featurizer)
        })
        .collect()
}

/// Training sequence for `target` conditioned on `reference` (speaker
/// embedding and content frames both come from the reference).
pub fn ar_example(target: &Utterance, reference: &Utterance, variant: Variant) -> Result<ArInput> {
    let r = &target.record;
    assemble(
        &r.text,
        &target.tokens,
        reference.s.clone(),
        Condition::Reference(reference.content.clone()),
        &r.lang,
        r.emo.as_deref(),
        variant,
    )
}
