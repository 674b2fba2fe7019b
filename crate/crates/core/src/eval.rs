//! Classification metrics, model evaluation over labeled pairs and ranked
//! duplicate retrieval.

use std::fmt;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BugReport, Corpus};
use crate::embedding::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::gbdt::{logloss, GbdtModel};
use crate::pairs::{candidate_set, featurize_pairs, LabeledPair};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fp)
}

pub fn recall(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    let (p, r) = (precision(cm), recall(cm));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp + cm.tn, cm.total())
}

/// Predicted positive iff `prob >= threshold`.
pub fn confusion(labels: &[f64], probs: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if labels.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            left: labels.len(),
            right: probs.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Precondition(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(probs) {
        match (y == 1.0, p >= threshold) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub logloss: f64,
    pub confusion: ConfusionMatrix,
    pub threshold: f64,
}

impl MetricsReport {
    pub fn from_predictions(labels: &[f64], probs: &[f64], threshold: f64) -> Result<Self> {
        let cm = confusion(labels, probs, threshold)?;
        Ok(MetricsReport {
            precision: precision(&cm),
            recall: recall(&cm),
            f1: f1(&cm),
            accuracy: accuracy(&cm),
            logloss: logloss(labels, probs)?,
            confusion: cm,
            threshold,
        })
    }

    /// Aligned two-column table: one row per metric.
    pub fn to_table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8}", "Metric", "Value")?;
        writeln!(f, "{:-<10} {:->8}", "", "")?;
        for (name, v) in [
            ("Precision", self.precision),
            ("Recall", self.recall),
            ("F1-Score", self.f1),
            ("Accuracy", self.accuracy),
            ("Logloss", self.logloss),
        ] {
            writeln!(f, "{name:<10} {v:>8.4}")?;
        }
        let cm = &self.confusion;
        write!(
            f,
            "tp={} fp={} tn={} fn={} threshold={}",
            cm.tp, cm.fp, cm.tn, cm.fn_, self.threshold
        )
    }
}

/// Featurizes the test pairs, predicts and scores them.
pub fn evaluate_model<B: EmbeddingBackend + ?Sized>(
    model: &GbdtModel,
    pairs: &[LabeledPair],
    corpus: &Corpus,
    store: &B,
    featurizer: &Featurizer,
    threshold: f64,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs to evaluate".into()));
    }
    let data = featurize_pairs(pairs, corpus, featurizer, store)?;
    let probs = model.predict_dataset(&data)?;
    MetricsReport::from_predictions(data.labels(), &probs, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub bug_id: String,
    pub probability: f64,
    pub headline: String,
    pub created_at: DateTime<Utc>,
}

/// Probability descending, then newer first, then id ascending.
pub fn sort_ranked(c: &mut [RankedCandidate]) {
    c.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| b.created_at.cmp(&a.created_at))
            .then_with(|| a.bug_id.cmp(&b.bug_id))
    });
}

/// Scores `new_bug` against its same-cell candidates and keeps the best `top_k`.
pub fn rank_candidates<B: EmbeddingBackend + ?Sized>(
    new_bug: &BugReport,
    corpus: &Corpus,
    model: &GbdtModel,
    store: &B,
    featurizer: &Featurizer,
    top_k: usize,
) -> Result<Vec<RankedCandidate>> {
    if top_k == 0 {
        return Err(Error::Precondition("top_k must be at least 1".into()));
    }
    model.check_schema(featurizer.schema_hash())?;
    let candidates = candidate_set(new_bug, corpus);
    let query = featurizer.profile_bug(new_bug, store);
    let mut ranked: Vec<RankedCandidate> = candidates
        .par_iter()
        .map(|bug| {
            let features = featurizer.pair(&query, &featurizer.profile_bug(bug, store))?;
            Ok(RankedCandidate {
                bug_id: bug.id.clone(),
                probability: model.predict_row(&features.values),
                headline: bug.headline.clone(),
                created_at: bug.created_at,
            })
        })
        .collect::<Result<_>>()?;
    sort_ranked(&mut ranked);
    ranked.truncate(top_k);
    Ok(ranked)
}
