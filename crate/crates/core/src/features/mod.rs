//! Pair feature extraction: statistical, syntactic and embedding-distance
//! features over two bug reports.

mod distance;
mod pos;
mod schema;
mod stats;

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BugReport, Corpus};
use crate::embedding::{embed_document, DocEmbedding, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::preprocess::{analyze, CleanConfig, CleanedText};

pub use distance::{
    braycurtis, canberra, cityblock, cosine, distance_features, euclidean, jaccard, minkowski,
};
pub use pos::{count_phrases, PhraseCounts, PosTag, PosTagger, DEFAULT_LEXICON};
pub use schema::{
    FeatureSchema, SchemaHash, N_DISTANCE_FEATURES, N_SEMANTIC_FEATURES, N_STAT_FEATURES,
    PAIR_FEATURE_NAMES,
};
pub use stats::{levenshtein, sentence_count, shape_moments, syllable_count, text_stats, TextStats};

/// One feature row tagged with the schema it was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub values: Vec<f64>,
    pub schema_hash: SchemaHash,
}

/// Everything about one text that pair features need, computed once.
#[derive(Debug, Clone)]
pub struct TextProfile {
    pub text: CleanedText,
    pub stats: TextStats,
    pub phrases: PhraseCounts,
    pub embedding: DocEmbedding,
    vocab: BTreeSet<String>,
    joined: String,
}

impl TextProfile {
    pub fn tokens(&self) -> &[String] {
        &self.text.normalized.tokens
    }
}

/// Holds the preprocessing config and tagger, and counts non-finite values
/// that had to be replaced by zero.
#[derive(Debug, Default)]
pub struct Featurizer {
    clean: CleanConfig,
    tagger: PosTagger,
    schema_hash: SchemaHashCell,
    non_finite: AtomicU64,
}

#[derive(Debug)]
struct SchemaHashCell(SchemaHash);

impl Default for SchemaHashCell {
    fn default() -> Self {
        SchemaHashCell(FeatureSchema::pair().hash())
    }
}

impl Featurizer {
    pub fn new(clean: CleanConfig, tagger: PosTagger) -> Self {
        Featurizer {
            clean,
            tagger,
            ..Default::default()
        }
    }

    pub fn clean_config(&self) -> &CleanConfig {
        &self.clean
    }

    pub fn tagger(&self) -> &PosTagger {
        &self.tagger
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::pair()
    }

    pub fn schema_hash(&self) -> SchemaHash {
        self.schema_hash.0
    }

    /// Number of NaN or infinite feature values replaced by zero so far.
    pub fn non_finite_replaced(&self) -> u64 {
        self.non_finite.load(Ordering::Relaxed)
    }

    pub fn profile<B: EmbeddingBackend + ?Sized>(&self, raw: &str, store: &B) -> TextProfile {
        let text = analyze(raw, &self.clean);
        let embedding = embed_document(&text.normalized.tokens, store);
        self.finish_profile(text, embedding)
    }

    /// Profile whose document embedding was computed elsewhere, e.g. by an
    /// embedding server using the same cleaning config.
    pub fn profile_with_embedding(&self, raw: &str, embedding: DocEmbedding) -> TextProfile {
        self.finish_profile(analyze(raw, &self.clean), embedding)
    }

    fn finish_profile(&self, text: CleanedText, embedding: DocEmbedding) -> TextProfile {
        let stats = text_stats(&text);
        let phrases = self.tagger.phrase_counts(&text.surface);
        let vocab = text.normalized.tokens.iter().cloned().collect();
        let joined = text.normalized.joined();
        TextProfile {
            text,
            stats,
            phrases,
            embedding,
            vocab,
            joined,
        }
    }

    pub fn profile_bug<B: EmbeddingBackend + ?Sized>(&self, bug: &BugReport, store: &B) -> TextProfile {
        self.profile(&bug.text(), store)
    }

    /// Profiles every bug in parallel, keyed by id.
    pub fn profile_corpus<B: EmbeddingBackend + ?Sized>(
        &self,
        corpus: &Corpus,
        store: &B,
    ) -> HashMap<String, TextProfile> {
        corpus
            .bugs()
            .par_iter()
            .map(|b| (b.id.clone(), self.profile_bug(b, store)))
            .collect()
    }

    pub fn pair(&self, a: &TextProfile, b: &TextProfile) -> Result<PairFeatures> {
        let (sa, sb) = (&a.stats, &b.stats);
        let (pa, pb) = (&a.phrases, &b.phrases);
        let diff = |x: usize, y: usize| x.abs_diff(y) as f64;
        let dist = distance_features(&a.embedding.vector, &b.embedding.vector)?;

        let mut values = Vec::with_capacity(PAIR_FEATURE_NAMES.len());
        values.extend([
            diff(sa.char_len, sb.char_len),
            diff(sa.word_count, sb.word_count),
            diff(sa.unique_words, sb.unique_words),
            sa.sentences as f64,
            sb.sentences as f64,
            sa.syllables as f64,
            sb.syllables as f64,
            sa.char_len as f64,
            sb.char_len as f64,
            a.vocab.intersection(&b.vocab).count() as f64,
            levenshtein(&a.joined, &b.joined) as f64,
            sa.skew,
            sb.skew,
            sa.kurtosis,
            sb.kurtosis,
            pa.noun_phrases as f64,
            pb.noun_phrases as f64,
            pa.verb_phrases as f64,
            pb.verb_phrases as f64,
            diff(pa.noun_phrases, pb.noun_phrases),
            diff(pa.verb_phrases, pb.verb_phrases),
        ]);
        values.extend(dist);

        let mut replaced = 0;
        for v in values.iter_mut().filter(|v| !v.is_finite()) {
            *v = 0.0;
            replaced += 1;
        }
        if replaced > 0 {
            self.non_finite.fetch_add(replaced, Ordering::Relaxed);
            tracing::warn!(replaced, "non-finite feature values replaced by zero");
        }
        Ok(PairFeatures {
            values,
            schema_hash: self.schema_hash(),
        })
    }

    /// Features for many id pairs, reusing one profile per bug.
    pub fn pairs_from_profiles(
        &self,
        profiles: &HashMap<String, TextProfile>,
        pairs: &[(String, String)],
    ) -> Result<Vec<PairFeatures>> {
        pairs
            .par_iter()
            .map(|(a, b)| {
                let pa = profiles.get(a).ok_or_else(|| Error::UnknownId(a.clone()))?;
                let pb = profiles.get(b).ok_or_else(|| Error::UnknownId(b.clone()))?;
                self.pair(pa, pb)
            })
            .collect()
    }
}

/// The 28 pair features for two reports under the default tagger.
pub fn build_feature_vector<B: EmbeddingBackend + ?Sized>(
    a: &BugReport,
    b: &BugReport,
    store: &B,
    cfg: &CleanConfig,
) -> Result<PairFeatures> {
    let f = Featurizer::new(cfg.clone(), PosTagger::default());
    f.pair(&f.profile_bug(a, store), &f.profile_bug(b, store))
}
