//! Pretrained word vectors in the text `.vec` layout and mean-pooled document
//! embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SkipReport;
use crate::error::{Error, Result};

/// Dimension of the fastText-style vectors the pipeline is built around.
pub const DEFAULT_DIM: usize = 300;

/// Anything that can hand out a fixed-width vector per word.
pub trait EmbeddingBackend: Send + Sync {
    fn dim(&self) -> usize;
    fn vector(&self, word: &str) -> Option<&[f32]>;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordVectorStore {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl WordVectorStore {
    pub fn new(dim: usize) -> Self {
        WordVectorStore {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Inserts or overwrites a word vector.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("word vector", "non-finite component"));
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.len()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

impl EmbeddingBackend for WordVectorStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Loads a text vector file: header `count dim`, then `word v1 .. vdim` per line.
///
/// At most `count` lines are read. Lines with the wrong number of components or
/// unparsable/non-finite values are skipped and counted.
pub fn load_vec_file(path: &Path) -> Result<(WordVectorStore, SkipReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_vec(BufReader::new(file), &path.display().to_string())
}

pub fn parse_vec<R: BufRead>(reader: R, context: &str) -> Result<(WordVectorStore, SkipReport)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::format(context, e))?,
        None => return Err(Error::format(context, "missing header line")),
    };
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(Error::format(context, format!("bad header {header:?}"))),
        },
        _ => return Err(Error::format(context, format!("bad header {header:?}"))),
    };

    let mut store = WordVectorStore::new(dim);
    let mut skips = SkipReport::default();
    for (n, line) in lines.take(count).enumerate() {
        let line = line.map_err(|e| Error::format(context, e))?;
        let mut parts = line.split_ascii_whitespace();
        let Some(word) = parts.next() else {
            skips.record(format!("line {}: empty", n + 2));
            continue;
        };
        let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
        match values {
            Ok(v) if v.len() == dim && v.iter().all(|x| x.is_finite()) => {
                store.vectors.insert(word.to_owned(), v);
            }
            Ok(v) if v.len() != dim => {
                skips.record(format!("line {}: {} components, expected {dim}", n + 2, v.len()));
            }
            _ => skips.record(format!("line {}: unparsable component", n + 2)),
        }
    }
    Ok((store, skips))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedding {
    pub vector: Vec<f64>,
    pub n_tokens_hit: usize,
}

impl DocEmbedding {
    pub fn zeros(dim: usize) -> Self {
        DocEmbedding {
            vector: vec![0.0; dim],
            n_tokens_hit: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Component-wise mean of the in-vocabulary token vectors. Out-of-vocabulary
/// tokens are skipped; no hits gives the zero vector.
pub fn embed_document<B, S>(tokens: &[S], store: &B) -> DocEmbedding
where
    B: EmbeddingBackend + ?Sized,
    S: AsRef<str>,
{
    // summing per distinct word in sorted order keeps the result independent of token order
    let mut counts: BTreeMap<&str, (usize, &[f32])> = BTreeMap::new();
    for t in tokens {
        let t = t.as_ref();
        if let Some(v) = store.vector(t) {
            counts.entry(t).or_insert((0, v)).0 += 1;
        }
    }
    let mut sum = vec![0.0f64; store.dim()];
    let mut hits = 0usize;
    for (n, v) in counts.into_values() {
        hits += n;
        let w = n as f64;
        for (acc, x) in sum.iter_mut().zip(v) {
            *acc += w * f64::from(*x);
        }
    }
    if hits > 0 {
        let n = hits as f64;
        sum.iter_mut().for_each(|x| *x /= n);
    }
    DocEmbedding {
        vector: sum,
        n_tokens_hit: hits,
    }
}
