use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::preprocess::CleanedText;

/// Per-text statistics that feed the statistical pair features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TextStats {
    pub char_len: usize,
    pub word_count: usize,
    pub unique_words: usize,
    pub sentences: usize,
    pub syllables: usize,
    /// Bias-corrected sample skewness of token lengths.
    pub skew: f64,
    /// Bias-corrected excess kurtosis of token lengths.
    pub kurtosis: f64,
}

pub fn text_stats(text: &CleanedText) -> TextStats {
    let tokens = &text.normalized.tokens;
    let lens: Vec<f64> = tokens.iter().map(|t| t.len() as f64).collect();
    let (skew, kurtosis) = shape_moments(&lens);
    TextStats {
        char_len: text.cleaned.len(),
        word_count: tokens.len(),
        unique_words: tokens.iter().collect::<HashSet<_>>().len(),
        sentences: sentence_count(&text.cleaned),
        syllables: tokens.iter().map(|t| syllable_count(t)).sum(),
        skew,
        kurtosis,
    }
}

/// Segments between `.`, `!`, `?` and newlines that contain something other
/// than whitespace.
pub fn sentence_count(cleaned: &str) -> usize {
    cleaned
        .split(['.', '!', '?', '\n'])
        .filter(|seg| !seg.trim().is_empty())
        .count()
}

/// Maximal runs of `[aeiouy]`, at least one per token.
pub fn syllable_count(token: &str) -> usize {
    let mut runs = 0;
    let mut in_run = false;
    for b in token.bytes() {
        let vowel = matches!(b, b'a' | b'e' | b'i' | b'o' | b'u' | b'y');
        if vowel && !in_run {
            runs += 1;
        }
        in_run = vowel;
    }
    runs.max(1)
}

/// Unbiased skewness and excess kurtosis. Both are zero for fewer than three
/// values or zero variance; kurtosis is also zero below four values.
pub fn shape_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 3 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    let g1 = m3 / m2.powf(1.5);
    let skew = (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1;
    let kurtosis = if n < 4 {
        0.0
    } else {
        ((nf * nf - 1.0) * m4 / (m2 * m2) - 3.0 * (nf - 1.0).powi(2)) / ((nf - 2.0) * (nf - 3.0))
    };
    (skew, kurtosis)
}

/// Character-level edit distance with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        edit_distance(a.as_bytes(), b.as_bytes())
    } else {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        edit_distance(&a, &b)
    }
}

fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
