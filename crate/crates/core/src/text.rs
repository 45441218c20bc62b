//! Control-tag inventories and the paralinguistic text markup shared by the
//! corpus generator and the AR vocabulary.

use crate::error::{Error, Result};

pub const MANDARIN: &str = "zh";
pub const ENGLISH: &str = "en";

/// Chinese dialect varieties, in vocabulary order.
pub const DIALECTS: [&str; 14] = [
    "cantonese",
    "shanghainese",
    "sichuanese",
    "minnan",
    "hakka",
    "dongbei",
    "tianjin",
    "henan",
    "shaanxi",
    "shandong",
    "hunan",
    "hubei",
    "jiangxi",
    "guizhou",
];

pub const NEUTRAL: &str = "neutral";

/// `neutral`, seven primary emotions, four extended ones.
pub const EMOTIONS: [&str; 12] = [
    "neutral",
    "happy",
    "sad",
    "angry",
    "fear",
    "contempt",
    "serious",
    "surprise",
    "concern",
    "blue",
    "disgust",
    "psychology",
];

pub fn lang_tags() -> Vec<&'static str> {
    let mut v = vec![MANDARIN, ENGLISH];
    v.extend(DIALECTS);
    v
}

pub fn is_dialect(lang: &str) -> bool {
    DIALECTS.contains(&lang)
}

pub fn lang_index(lang: &str) -> Result<usize> {
    lang_tags().iter().position(|&l| l == lang).ok_or_else(|| Error::Vocab {
        kind: "lang",
        tag: lang.into(),
        valid: lang_tags().join(", "),
    })
}

pub fn emo_index(emo: &str) -> Result<usize> {
    EMOTIONS.iter().position(|&e| e == emo).ok_or_else(|| Error::Vocab {
        kind: "emo",
        tag: emo.into(),
        valid: EMOTIONS.join(", "),
    })
}

/// Paralinguistic markers written inline in the text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Paraling {
    Laugh,
    Breath,
    Cry,
    Cough,
    LaughSpanBegin,
    LaughSpanEnd,
}

impl Paraling {
    pub const ALL: [Paraling; 6] = [
        Paraling::Laugh,
        Paraling::Breath,
        Paraling::Cry,
        Paraling::Cough,
        Paraling::LaughSpanBegin,
        Paraling::LaughSpanEnd,
    ];

    pub fn markup(self) -> &'static str {
        match self {
            Paraling::Laugh => "[laugh]",
            Paraling::Breath => "[breath]",
            Paraling::Cry => "[cry]",
            Paraling::Cough => "[cough]",
            Paraling::LaughSpanBegin => "<laugh>",
            Paraling::LaughSpanEnd => "</laugh>",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).expect("listed")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextUnit {
    Char(char),
    Marker(Paraling),
}

/// Splits text into characters and markers. Unknown bracketed words are
/// ordinary characters.
pub fn parse_text(text: &str) -> Vec<TextUnit> {
    let mut out = Vec::new();
    let mut rest = text;
    'outer: while let Some(c) = rest.chars().next() {
        if c == '[' || c == '<' {
            for p in Paraling::ALL {
                if let Some(tail) = rest.strip_prefix(p.markup()) {
                    out.push(TextUnit::Marker(p));
                    rest = tail;
                    continue 'outer;
                }
            }
        }
        out.push(TextUnit::Char(c));
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Characters only, markers removed.
pub fn plain_text(text: &str) -> String {
    parse_text(text)
        .into_iter()
        .filter_map(|u| match u {
            TextUnit::Char(c) => Some(c),
            TextUnit::Marker(_) => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventories() {
        assert_eq!(lang_tags().len(), 16);
        assert_eq!(EMOTIONS.len(), 12);
        assert_eq!(emo_index("blue").unwrap(), 9);
        assert!(matches!(emo_index("bored"), Err(Error::Vocab { .. })));
    }

    #[test]
    fn markup_parses() {
        let u = parse_text("ha[laugh] <laugh>ok</laugh>[x]");
        assert_eq!(u[2], TextUnit::Marker(Paraling::Laugh));
        assert_eq!(u[4], TextUnit::Marker(Paraling::LaughSpanBegin));
        assert_eq!(u[7], TextUnit::Marker(Paraling::LaughSpanEnd));
        assert_eq!(plain_text("ha[laugh] <laugh>ok</laugh>[x]"), "ha ok[x]");
    }
}
