//! Pairs, split, training and holdout evaluation in one call.

use serde::{Deserialize, Serialize};

use crate::corpus::{duplicate_clusters, filter_invalid, Corpus};
use crate::embedding::EmbeddingBackend;
use crate::error::Result;
use crate::eval::{evaluate_model, MetricsReport};
use crate::features::Featurizer;
use crate::gbdt::{train_with_log, GbdtModel, Hyperparams, TrainLog, DECISION_THRESHOLD};
use crate::pairs::{build_training_pairs, featurize_pairs, train_test_split, TrainTestSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub neg_per_pos: f64,
    pub test_fraction: f64,
    pub threshold: f64,
    /// Seeds negative sampling and the split; training uses `hyperparams.seed`.
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            neg_per_pos: 1.0,
            test_fraction: 0.2,
            threshold: DECISION_THRESHOLD,
            seed: 7,
            hyperparams: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub corpus: Corpus,
    pub split: TrainTestSplit,
    pub model: GbdtModel,
    pub log: TrainLog,
    pub metrics: MetricsReport,
}

/// Filters the corpus, builds and splits pairs, trains on the train side and
/// scores the test side.
pub fn run<B: EmbeddingBackend + ?Sized>(
    corpus: &Corpus,
    store: &B,
    featurizer: &Featurizer,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let corpus = filter_invalid(corpus);
    let clusters = duplicate_clusters(&corpus);
    let pairs = build_training_pairs(&corpus, &clusters, cfg.neg_per_pos, cfg.seed)?;
    let split = train_test_split(&pairs, cfg.test_fraction, cfg.seed)?;
    let train = featurize_pairs(&split.train, &corpus, featurizer, store)?;
    let (model, log) = train_with_log(&train, &cfg.hyperparams)?;
    let metrics = evaluate_model(&model, &split.test, &corpus, store, featurizer, cfg.threshold)?;
    Ok(PipelineOutput {
        corpus,
        split,
        model,
        log,
        metrics,
    })
}
