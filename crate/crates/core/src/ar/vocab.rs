use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsq::FsqConfig;
use crate::text::{emo_index, lang_index, lang_tags, parse_text, Paraling, TextUnit, EMOTIONS};

pub const N_TEXT: u32 = 256;
pub const N_AUDIO: u32 = 6561;
pub const TEXT_BASE: u32 = 0;
pub const AUDIO_BASE: u32 = TEXT_BASE + N_TEXT;
pub const BT: u32 = AUDIO_BASE + N_AUDIO;
pub const ET: u32 = BT + 1;
pub const BA: u32 = BT + 2;
pub const EA: u32 = BT + 3;
pub const PAD: u32 = BT + 4;
pub const LANG_BASE: u32 = BT + 5;
pub const EMO_BASE: u32 = LANG_BASE + 16;
pub const PARA_BASE: u32 = EMO_BASE + 12;
pub const VOCAB_SIZE: u32 = PARA_BASE + 6;

/// Output classes: every audio token plus end-of-audio.
pub const HEAD_CLASSES: usize = N_AUDIO as usize + 1;
pub const EA_CLASS: usize = N_AUDIO as usize;

/// Id layout, recorded in model sidecars.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub text: (u32, u32),
    pub audio: (u32, u32),
    pub specials: Vec<(String, u32)>,
    pub lang: Vec<(String, u32)>,
    pub emo: Vec<(String, u32)>,
    pub paraling: Vec<(String, u32)>,
    pub size: u32,
}

pub fn build_vocab() -> Vocab {
    let specials = [("e_BT", BT), ("e_ET", ET), ("e_BA", BA), ("e_EA", EA), ("PAD", PAD)]
        .iter()
        .map(|&(n, i)| (n.to_string(), i))
        .collect();
    Vocab {
        text: (TEXT_BASE, TEXT_BASE + N_TEXT - 1),
        audio: (AUDIO_BASE, AUDIO_BASE + N_AUDIO - 1),
        specials,
        lang: lang_tags().iter().enumerate().map(|(i, l)| (l.to_string(), LANG_BASE + i as u32)).collect(),
        emo: EMOTIONS.iter().enumerate().map(|(i, e)| (e.to_string(), EMO_BASE + i as u32)).collect(),
        paraling: Paraling::ALL
            .iter()
            .map(|p| (p.markup().to_string(), PARA_BASE + p.index() as u32))
            .collect(),
        size: VOCAB_SIZE,
    }
}

impl Vocab {
    pub fn audio_count(&self) -> u32 {
        self.audio.1 - self.audio.0 + 1
    }

    /// Checks that the audio range matches a tokenizer's codebook.
    pub fn check_codebook(&self, cfg: &FsqConfig) -> Result<()> {
        if cfg.codebook_size() != self.audio_count() {
            return Err(Error::Config(format!(
                "tokenizer codebook {} does not match {} audio ids",
                cfg.codebook_size(),
                self.audio_count()
            )));
        }
        Ok(())
    }
}

pub fn lang_id(lang: &str) -> Result<u32> {
    Ok(LANG_BASE + lang_index(lang)? as u32)
}

pub fn emo_id(emo: &str) -> Result<u32> {
    Ok(EMO_BASE + emo_index(emo)? as u32)
}

pub fn audio_id(token: u32) -> Result<u32> {
    if token >= N_AUDIO {
        return Err(Error::Range(format!("audio token {token} outside [0, {N_AUDIO})")));
    }
    Ok(AUDIO_BASE + token)
}

/// UTF-8 bytes for characters, dedicated ids for paralinguistic markers.
pub fn encode_text(text: &str) -> Vec<u32> {
    let mut out = Vec::new();
    for u in parse_text(text) {
        match u {
            TextUnit::Char(c) => {
                let mut buf = [0u8; 4];
                out.extend(c.encode_utf8(&mut buf).bytes().map(|b| TEXT_BASE + b as u32));
            }
            TextUnit::Marker(p) => out.push(PARA_BASE + p.index() as u32),
        }
    }
    out
}
