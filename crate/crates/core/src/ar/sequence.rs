use serde::{Deserialize, Serialize};

use super::vocab::{audio_id, emo_id, encode_text, lang_id, BA, BT, EA, EA_CLASS, ET};
use crate::conditioner::{ConditionBundle, ContentFeatures, SpeakerEmbedding, N_QUERIES};
use crate::error::{Error, Result};
use crate::fsq::TokenSequence;
use crate::text::{MANDARIN, NEUTRAL};

/// Which conditioning positions the sequence carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    NoSpk,
    NoBoth,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoSpk, Variant::NoBoth];

    pub fn has_speaker(self) -> bool {
        self == Variant::Full
    }

    pub fn has_condition_tokens(self) -> bool {
        self != Variant::NoBoth
    }

    pub fn cond_slots(self) -> usize {
        self.has_speaker() as usize + if self.has_condition_tokens() { N_QUERIES } else { 0 }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSpk => "no_spk",
            Variant::NoBoth => "no_both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`; valid: full, no_spk, no_both")))
    }
}

/// Source of the 32 condition tokens.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    /// Precomputed tokens, `N_QUERIES x d_model`.
    Tokens(crate::numerics::Tensor<f32>),
    /// Reference content features, run through the Q-Former in-graph.
    Reference(ContentFeatures),
}

/// One assembled AR sequence:
/// `[s, c(32), e_BT, lang, emo, text.., e_ET, e_BA, audio.., e_EA]`,
/// with `s` and `c` dropped by the ablation variants.
#[derive(Clone, Debug, PartialEq)]
pub struct ArInput {
    pub variant: Variant,
    pub s: SpeakerEmbedding,
    pub cond: Condition,
    /// Ids of every discrete position, starting at `e_BT`.
    pub ids: Vec<u32>,
    /// Over the whole sequence; true on audio positions and the final
    /// `e_EA`.
    pub mask: Vec<bool>,
    pub n_text: usize,
    pub n_audio: usize,
}

impl ArInput {
    pub fn len(&self) -> usize {
        self.variant.cond_slots() + self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sequence length through `e_BA`, where generation starts.
    pub fn prompt_len(&self) -> usize {
        self.variant.cond_slots() + 3 + self.n_text + 2
    }

    /// `(row predicting it, head class)` for every masked position.
    pub fn targets(&self) -> Vec<(usize, usize)> {
        let off = self.variant.cond_slots();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| {
                let id = self.ids[i - off];
                let class = if id == EA { EA_CLASS } else { (id - super::vocab::AUDIO_BASE) as usize };
                (i - 1, class)
            })
            .collect()
    }

    /// The prompt only (audio and `e_EA` removed).
    pub fn prompt(&self) -> ArInput {
        let keep = self.prompt_len() - self.variant.cond_slots();
        ArInput {
            ids: self.ids[..keep].to_vec(),
            mask: vec![false; self.prompt_len()],
            n_audio: 0,
            ..self.clone()
        }
    }
}

pub fn resolve_tags(lang: Option<&str>, emo: Option<&str>) -> (String, String) {
    (
        lang.unwrap_or(MANDARIN).to_string(),
        emo.unwrap_or(NEUTRAL).to_string(),
    )
}

/// Builds the sequence and its loss mask. Missing `emo` means `neutral`.
/// With no audio tokens (an inference prompt) the layout keeps its `e_EA`
/// slot but the mask is empty.
pub fn assemble(
    text: &str,
    tokens: &TokenSequence,
    s: SpeakerEmbedding,
    cond: Condition,
    lang: &str,
    emo: Option<&str>,
    variant: Variant,
) -> Result<ArInput> {
    let text_ids = encode_text(text);
    if text_ids.is_empty() && !tokens.is_empty() {
        return Err(Error::Contract("training items need non-empty text".into()));
    }
    let mut ids = vec![BT, lang_id(lang)?, emo_id(emo.unwrap_or(NEUTRAL))?];
    ids.extend(&text_ids);
    ids.extend([ET, BA]);
    for &t in &tokens.ids {
        ids.push(audio_id(t)?);
    }
    ids.push(EA);
    let off = variant.cond_slots();
    let total = off + ids.len();
    let n_audio = tokens.len();
    let mut mask = vec![false; total];
    if n_audio > 0 {
        for m in &mut mask[total - n_audio - 1..] {
            *m = true;
        }
    }
    Ok(ArInput {
        variant,
        s,
        cond,
        ids,
        mask,
        n_text: text_ids.len(),
        n_audio,
    })
}

/// [`assemble`] with a precomputed condition bundle.
pub fn assemble_sequence(
    text: &str,
    tokens: &TokenSequence,
    bundle: &ConditionBundle,
    lang: &str,
    emo: Option<&str>,
    variant: Variant,
) -> Result<ArInput> {
    assemble(text, tokens, bundle.s.clone(), Condition::Tokens(bundle.c.clone()), lang, emo, variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::vocab::EMO_BASE;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn bundle() -> ConditionBundle {
        ConditionBundle {
            s: SpeakerEmbedding(vec![0.125; 64]),
            c: Tensor::zeros(&[32, 8]),
        }
    }

    fn toks(n: usize) -> TokenSequence {
        TokenSequence::new((0..n as u32).collect())
    }

    #[test]
    fn layout_examples() {
        let a = assemble_sequence("hello", &toks(10), &bundle(), "zh", None, Variant::Full).unwrap();
        assert_eq!(a.len(), 54);
        assert_eq!(a.mask.iter().filter(|&&m| m).count(), 11);
        assert_eq!(a.ids[2], EMO_BASE);
        let p = assemble_sequence("hello", &toks(0), &bundle(), "zh", None, Variant::Full).unwrap();
        assert_eq!(p.len(), 44);
        assert!(p.mask.iter().all(|&m| !m));
        let nb = assemble_sequence("hello", &toks(10), &bundle(), "zh", None, Variant::NoBoth).unwrap();
        assert_eq!(nb.len(), 21);
        let ns = assemble_sequence("hello", &toks(10), &bundle(), "zh", None, Variant::NoSpk).unwrap();
        assert_eq!(a.len() - ns.len(), 1);
    }

    #[test]
    fn unknown_tags_rejected() {
        assert!(assemble_sequence("a", &toks(1), &bundle(), "klingon", None, Variant::Full).is_err());
        assert!(assemble_sequence("a", &toks(1), &bundle(), "zh", Some("bored"), Variant::Full).is_err());
    }

    proptest! {
        #[test]
        fn length_formula(t in 1usize..60, n in 0usize..80) {
            let text: String = "abcdefghij".chars().cycle().take(t).collect();
            let a = assemble_sequence(&text, &toks(n), &bundle(), "en", Some("happy"), Variant::Full).unwrap();
            prop_assert_eq!(a.len(), 1 + 32 + 3 + t + 2 + n + 1);
            let masked = a.mask.iter().filter(|&&m| m).count();
            prop_assert_eq!(masked, if n == 0 { 0 } else { n + 1 });
            // Nothing at or before e_BA is a target.
            prop_assert!(a.mask[..a.prompt_len()].iter().all(|&m| !m));
        }
    }
}
