//! Text normalization for bug-report text.
//!
//! The pipeline runs in a fixed order: lowercase, mask network addresses, mask
//! file paths, drop non-ASCII, split into `[a-z0-9_]+` tokens, then per token
//! drop stopwords, map synonyms and Porter-stem. The last three are repeated per
//! token until it stops changing, so normalizing already-normalized text is a
//! no-op.

mod patterns;
mod porter;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use patterns::{replace_addresses, replace_filepaths, ADDRESS_TOKEN, FILEPATH_TOKEN};
pub use porter::stem;

/// Shipped English stopword list (127 words, one per line).
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
/// Small domain synonym map used by tests and examples.
pub const SAMPLE_SYNONYMS: &str = include_str!("../../data/synonyms_sample.tsv");

/// Upper bound on stopword/synonym/stem rounds for one token.
const MAX_CANON_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanConfig {
    pub stopwords: HashSet<String>,
    pub synonyms: HashMap<String, String>,
    pub min_token_len: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            synonyms: HashMap::new(),
            min_token_len: 1,
        }
    }
}

impl CleanConfig {
    pub fn new(
        stopwords: HashSet<String>,
        synonyms: HashMap<String, String>,
        min_token_len: usize,
    ) -> Result<Self> {
        if let Some((from, to)) = synonyms
            .iter()
            .find(|(from, to)| from != to && synonyms.contains_key(*to))
        {
            return Err(Error::format(
                "synonym map",
                format!("{from:?} maps to {to:?}, which is itself remapped"),
            ));
        }
        Ok(CleanConfig {
            stopwords,
            synonyms,
            min_token_len,
        })
    }

    /// Default stopwords plus the shipped sample synonym map.
    pub fn with_sample_synonyms() -> Self {
        let synonyms = parse_synonyms(SAMPLE_SYNONYMS, "sample synonyms").expect("shipped file");
        CleanConfig::new(parse_stopwords(DEFAULT_STOPWORDS), synonyms, 1).expect("shipped file")
    }

    /// Builds a config from optional stopword and synonym files, falling back to
    /// the shipped stopwords and an empty synonym map.
    pub fn from_files(stopwords: Option<&Path>, synonyms: Option<&Path>) -> Result<Self> {
        let stopwords = match stopwords {
            Some(p) => load_stopwords(p)?,
            None => parse_stopwords(DEFAULT_STOPWORDS),
        };
        let synonyms = match synonyms {
            Some(p) => load_synonyms(p)?,
            None => HashMap::new(),
        };
        CleanConfig::new(stopwords, synonyms, 1)
    }
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn parse_synonyms(text: &str, context: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (from, to) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(context, format!("line {}: expected from<TAB>to", n + 1)))?;
        map.insert(from.trim().to_lowercase(), to.trim().to_lowercase());
    }
    Ok(map)
}

/// Stopword file: one token per line, UTF-8.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Synonym file: `from<TAB>to` per line.
pub fn load_synonyms(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_synonyms(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    /// Length of the cleaned string before tokenization.
    pub source_char_len: usize,
}

impl TokenizedText {
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Every intermediate a feature extractor may need from one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CleanedText {
    /// Lowercased, masked, ASCII-only string (pipeline steps 1-4).
    pub cleaned: String,
    /// Tokens before stopword removal and stemming.
    pub surface: Vec<String>,
    pub normalized: TokenizedText,
}

/// Steps 1-4: lowercase, mask addresses and paths, strip non-ASCII.
pub fn clean_string(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let masked = replace_filepaths(&replace_addresses(&lowered));
    masked.chars().filter(char::is_ascii).collect()
}

/// Step 5: split on anything outside `[a-z0-9_]`.
pub fn split_tokens(cleaned: &str) -> Vec<String> {
    cleaned
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Steps 6-8 for a single surface token, iterated to a fixed point.
/// `None` means the token is dropped.
pub fn canonical_token(token: &str, cfg: &CleanConfig) -> Option<String> {
    let mut current = token.to_owned();
    for _ in 0..MAX_CANON_ROUNDS {
        if current.len() < cfg.min_token_len || cfg.stopwords.contains(&current) {
            return None;
        }
        let mapped = cfg.synonyms.get(&current).map_or(current.as_str(), String::as_str);
        let next = stem(mapped);
        if next == current {
            return Some(current);
        }
        current = next;
    }
    Some(current)
}

pub fn analyze(raw: &str, cfg: &CleanConfig) -> CleanedText {
    let cleaned = clean_string(raw);
    let surface = split_tokens(&cleaned);
    let tokens = surface
        .iter()
        .filter_map(|t| canonical_token(t, cfg))
        .collect();
    CleanedText {
        normalized: TokenizedText {
            tokens,
            source_char_len: cleaned.len(),
        },
        cleaned,
        surface,
    }
}

/// Runs the full pipeline and keeps only the normalized tokens.
pub fn normalize(raw: &str, cfg: &CleanConfig) -> TokenizedText {
    analyze(raw, cfg).normalized
}
