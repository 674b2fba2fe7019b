use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Names of the pair features, in emission order. Changing this list changes the
/// schema hash and invalidates every trained model.
pub const PAIR_FEATURE_NAMES: [&str; 28] = [
    "char_len_diff",
    "word_count_diff",
    "unique_word_diff",
    "sentences_a",
    "sentences_b",
    "syllables_a",
    "syllables_b",
    "chars_a",
    "chars_b",
    "common_word_count",
    "levenshtein",
    "skew_a",
    "skew_b",
    "kurtosis_a",
    "kurtosis_b",
    "np_a",
    "np_b",
    "vp_a",
    "vp_b",
    "np_diff",
    "vp_diff",
    "dist_euclidean",
    "dist_canberra",
    "dist_jaccard",
    "dist_cityblock",
    "dist_cosine",
    "dist_minkowski",
    "dist_braycurtis",
];

pub const N_STAT_FEATURES: usize = 15;
pub const N_SEMANTIC_FEATURES: usize = 6;
pub const N_DISTANCE_FEATURES: usize = 7;

/// SHA-256 over the newline-joined feature names.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemaHash(pub [u8; 32]);

impl SchemaHash {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bad = || Error::format("schema hash", format!("{s:?} is not 64 hex digits"));
        if s.len() != 64 || !s.is_ascii() {
            return Err(bad());
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        Ok(SchemaHash(out))
    }
}

impl fmt::Display for SchemaHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for SchemaHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SchemaHash({})", &self.to_hex()[..12])
    }
}

impl Serialize for SchemaHash {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for SchemaHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SchemaHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Ordered, unique feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::format("feature schema", format!("duplicate name {dup:?}")));
        }
        Ok(FeatureSchema { names })
    }

    /// The frozen 28-feature pair schema.
    pub fn pair() -> Self {
        FeatureSchema {
            names: PAIR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Anonymous schema `f0..f{n-1}`, handy for toy data.
    pub fn numbered(n: usize) -> Self {
        FeatureSchema {
            names: (0..n).map(|i| format!("f{i}")).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn hash(&self) -> SchemaHash {
        let mut h = Sha256::new();
        h.update(self.names.join("\n").as_bytes());
        SchemaHash(h.finalize().into())
    }
}
