//! Score, tag and filter a manifest of utterances. Filtering only marks
//! records; nothing is ever dropped.

mod filter;
mod manifest;
mod pipeline;
mod scorers;

pub use filter::{filter_manifest, FilterPolicy};
pub use manifest::{read_manifest, write_manifest};
pub use pipeline::{annotate_sample, resolve_audio_path, run_pipeline, Summary};
pub use scorers::{
    mos_from_snr, MosStub, RolloffScorer, Scorer, ScorerSet, SnrScorer, SpeechStub,
    TruncationScorer, DEFAULT_ROLLOFF_FRACTION,
};

use serde::{Deserialize, Serialize};

/// Per-scorer annotations. `None` means the scorer did not run (or could not
/// produce a value); it is never a stand-in default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityTags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_speech: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rolloff_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_consistent: Option<bool>,
    /// Set when the audio could not be loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_error: Option<String>,
}

impl QualityTags {
    /// Overwrites every field that is present in `patch`.
    pub fn merge(&mut self, patch: QualityTags) {
        macro_rules! take {
            ($($f:ident),*) => { $( if patch.$f.is_some() { self.$f = patch.$f; } )* };
        }
        take!(pseudo_mos, is_speech, snr_db, rolloff_hz, truncated, overlap, synthetic, speaker_consistent, read_error);
    }
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub audio_path: String,
    pub text: String,
    pub speaker_id: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emo: Option<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub tags: QualityTags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
    /// First failed criterion when `kept == Some(false)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
}
