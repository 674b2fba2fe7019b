//! Lexicon-plus-suffix part-of-speech tagger and phrase counting.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/pos_lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Det,
    Adj,
    Noun,
    Verb,
    Other,
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "DET" => Ok(PosTag::Det),
            "ADJ" => Ok(PosTag::Adj),
            "NOUN" => Ok(PosTag::Noun),
            "VERB" => Ok(PosTag::Verb),
            "OTHER" => Ok(PosTag::Other),
            other => Err(format!("unknown tag {other:?}")),
        }
    }
}

// suffix, tag; first match wins
const SUFFIX_RULES: [(&str, PosTag); 7] = [
    ("ing", PosTag::Verb),
    ("ed", PosTag::Verb),
    ("ize", PosTag::Verb),
    ("tion", PosTag::Noun),
    ("ness", PosTag::Noun),
    ("ment", PosTag::Noun),
    ("er", PosTag::Noun),
];

/// Suffix rules only fire when at least this much of the word is left.
const MIN_SUFFIX_STEM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhraseCounts {
    pub noun_phrases: usize,
    pub verb_phrases: usize,
}

#[derive(Debug, Clone)]
pub struct PosTagger {
    lexicon: HashMap<String, PosTag>,
}

impl Default for PosTagger {
    fn default() -> Self {
        PosTagger::parse(DEFAULT_LEXICON, "shipped lexicon").expect("shipped lexicon parses")
    }
}

impl PosTagger {
    pub fn new(lexicon: HashMap<String, PosTag>) -> Self {
        PosTagger { lexicon }
    }

    /// `word<TAB>TAG` per line.
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut lexicon = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(context, format!("line {}: expected word<TAB>TAG", n + 1)))?;
            let tag = tag
                .parse::<PosTag>()
                .map_err(|e| Error::format(context, format!("line {}: {e}", n + 1)))?;
            lexicon.insert(word.trim().to_lowercase(), tag);
        }
        Ok(PosTagger { lexicon })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PosTagger::parse(&text, &path.display().to_string())
    }

    pub fn tag(&self, token: &str) -> PosTag {
        if let Some(&tag) = self.lexicon.get(token) {
            return tag;
        }
        SUFFIX_RULES
            .iter()
            .find(|(suffix, _)| token.len() >= suffix.len() + MIN_SUFFIX_STEM && token.ends_with(suffix))
            .map_or(PosTag::Noun, |&(_, tag)| tag)
    }

    pub fn tag_all<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag(t.as_ref())).collect()
    }

    pub fn phrase_counts<S: AsRef<str>>(&self, tokens: &[S]) -> PhraseCounts {
        count_phrases(&self.tag_all(tokens))
    }
}

/// Noun phrases are greedy `DET? ADJ* NOUN+` chunks scanned left to right; verb
/// phrases are maximal runs of verbs.
pub fn count_phrases(tags: &[PosTag]) -> PhraseCounts {
    let mut noun_phrases = 0;
    let mut i = 0;
    while i < tags.len() {
        let mut j = i;
        if tags[j] == PosTag::Det {
            j += 1;
        }
        while j < tags.len() && tags[j] == PosTag::Adj {
            j += 1;
        }
        let mut k = j;
        while k < tags.len() && tags[k] == PosTag::Noun {
            k += 1;
        }
        if k > j {
            noun_phrases += 1;
            i = k;
        } else {
            i += 1;
        }
    }

    let verb_phrases = tags
        .iter()
        .enumerate()
        .filter(|&(i, t)| *t == PosTag::Verb && (i == 0 || tags[i - 1] != PosTag::Verb))
        .count();

    PhraseCounts {
        noun_phrases,
        verb_phrases,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosTag::*;

    #[test]
    fn suffix_rules() {
        let t = PosTagger::new(HashMap::new());
        assert_eq!(t.tag("loading"), Verb);
        assert_eq!(t.tag("crashed"), Verb);
        assert_eq!(t.tag("serialize"), Verb);
        assert_eq!(t.tag("connection"), Noun);
        assert_eq!(t.tag("parser"), Noun);
        assert_eq!(t.tag("red"), Noun);
        assert_eq!(t.tag("ping"), Noun);
        assert_eq!(t.tag("widget"), Noun);
    }

    #[test]
    fn lexicon_beats_suffix() {
        let t = PosTagger::default();
        assert_eq!(t.tag("the"), Det);
        assert_eq!(t.tag("string"), Noun);
        assert_eq!(t.tag("is"), Verb);
    }

    #[test]
    fn chunking() {
        assert_eq!(
            count_phrases(&[Det, Adj, Noun, Noun, Verb, Verb, Other, Det, Noun]),
            PhraseCounts { noun_phrases: 2, verb_phrases: 1 }
        );
        // a determiner with no noun after it does not start a phrase
        assert_eq!(count_phrases(&[Det, Adj, Verb]).noun_phrases, 0);
        assert_eq!(count_phrases(&[Verb, Other, Verb]).verb_phrases, 2);
        assert_eq!(count_phrases(&[]), PhraseCounts::default());
    }
}
