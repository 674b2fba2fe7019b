//! Loading word vectors and comparing mean-pooled document embeddings with
//! the seven distance measures.
//!
//! Pass a `.vec` path to use real vectors:
//! `cargo run --example document_embeddings -- wiki.en.vec`.

use std::io::Cursor;

use bugdedup::embedding::{embed_document, load_vec_file, parse_vec, EmbeddingBackend};
use bugdedup::features::distance_features;
use bugdedup::preprocess::{normalize, CleanConfig};

const TINY: &str = "7 4
browser 0.9 0.1 0.0 0.2
crash 0.1 0.8 0.3 0.0
hang 0.2 0.7 0.4 0.1
tab 0.8 0.2 0.1 0.3
open 0.5 0.5 0.1 0.1
printer 0.0 0.1 0.9 0.8
paper 0.1 0.0 0.8 0.9
";

fn main() -> bugdedup::Result<()> {
    let (store, skipped) = match std::env::args().nth(1) {
        Some(p) => load_vec_file(p.as_ref())?,
        None => parse_vec(Cursor::new(TINY), "built-in")?,
    };
    println!("{} words, dim {}, {} lines skipped", store.vocab_size(), store.dim(), skipped.skipped);

    let cfg = CleanConfig::default();
    let docs = ["Browser tab crash", "The browser hangs when a tab opens", "Printer out of paper"];
    let embedded: Vec<_> = docs
        .iter()
        .map(|d| embed_document(&normalize(d, &cfg).tokens, &store))
        .collect();
    for (d, e) in docs.iter().zip(&embedded) {
        println!("{d:?}: {} tokens in vocabulary", e.n_tokens_hit);
    }
    let names = ["euclidean", "canberra", "jaccard", "cityblock", "cosine", "minkowski", "braycurtis"];
    for (i, j) in [(0, 1), (0, 2)] {
        let d = distance_features(&embedded[i].vector, &embedded[j].vector)?;
        println!("\n{:?} vs {:?}", docs[i], docs[j]);
        for (n, v) in names.iter().zip(d) {
            println!("  {n:<11} {v:.4}");
        }
    }
    Ok(())
}
