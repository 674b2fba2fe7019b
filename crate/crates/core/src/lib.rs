//! Duplicate bug report detection: text normalization, pair features, a
//! gradient-boosted tree classifier, evaluation and HTTP serving.

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod pairs;
pub mod pipeline;
pub mod preprocess;
pub mod serve;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
