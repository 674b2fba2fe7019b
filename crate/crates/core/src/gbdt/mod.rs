//! Gradient-boosted decision trees for binary classification on logloss.

mod cv;
mod tree;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, PairFeatures, SchemaHash};

pub use cv::{grid_search, stratified_folds, GridResult, ParamGrid};
pub use tree::{Node, Tree};

use tree::TreeParams;

/// Probabilities are kept inside `[P_MIN, 1 - P_MIN]`.
pub const P_MIN: f64 = 1e-15;

/// Predicted probability at or above which a pair is labelled duplicate.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Row share used for split search each round. Leaf weights are always
    /// computed over every training row.
    pub subsample: f64,
    pub n_estimators: usize,
    pub min_child_weight: f64,
    pub max_depth: usize,
    pub gamma: f64,
    pub colsample_bytree: f64,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            subsample: 0.8,
            n_estimators: 300,
            min_child_weight: 5.0,
            max_depth: 4,
            gamma: 1.5,
            colsample_bytree: 0.8,
            learning_rate: 0.1,
            reg_lambda: 1.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub const NAMES: [&'static str; 9] = [
        "subsample",
        "n_estimators",
        "min_child_weight",
        "max_depth",
        "gamma",
        "colsample_bytree",
        "learning_rate",
        "reg_lambda",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(format!("hyperparameter {m}")));
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.subsample) {
            return bad("subsample must be in (0, 1]");
        }
        if !unit(self.colsample_bytree) {
            return bad("colsample_bytree must be in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        Ok(())
    }

    /// Sets a parameter by name. Integer parameters must be given whole values.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let whole = |v: f64| -> Result<u64> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(Error::Precondition(format!("{name} needs a whole number, got {v}")))
            }
        };
        match name {
            "subsample" => self.subsample = value,
            "n_estimators" => self.n_estimators = whole(value)? as usize,
            "min_child_weight" => self.min_child_weight = value,
            "max_depth" => self.max_depth = whole(value)? as usize,
            "gamma" => self.gamma = value,
            "colsample_bytree" => self.colsample_bytree = value,
            "learning_rate" => self.learning_rate = value,
            "reg_lambda" => self.reg_lambda = value,
            "seed" => self.seed = whole(value)?,
            other => return Err(Error::Precondition(format!("unknown hyperparameter {other:?}"))),
        }
        Ok(())
    }
}

/// Feature matrix with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if let Some(row) = x.iter().find(|r| r.len() != schema.len()) {
            return Err(Error::DimensionMismatch {
                left: schema.len(),
                right: row.len(),
            });
        }
        if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Precondition(format!("row {i} has a non-finite feature value")));
        }
        if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Precondition(format!("label {v} is not 0 or 1")));
        }
        Ok(Dataset { schema, x, y })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|v| **v == 1.0).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub version: String,
    pub schema_hash: SchemaHash,
    pub feature_names: Vec<String>,
    pub hyperparams: Hyperparams,
    /// Prior probability; the ensemble starts from its log-odds.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(P_MIN, 1.0 - P_MIN)
}

fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GbdtModel {
    /// Raw additive score before the sigmoid.
    pub fn margin(&self, row: &[f64]) -> f64 {
        log_odds(self.base_score) + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Probability for a row already known to follow the model's schema.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    pub fn check_schema(&self, hash: SchemaHash) -> Result<()> {
        if hash == self.schema_hash {
            Ok(())
        } else {
            Err(Error::SchemaMismatch {
                expected: self.schema_hash.to_hex(),
                found: hash.to_hex(),
            })
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_schema(data.schema.hash())?;
        Ok(data.x.par_iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(self.feature_names.clone()).expect("names were unique at training time")
    }
}

/// Probability that the pair is a duplicate.
pub fn predict_proba(model: &GbdtModel, x: &PairFeatures) -> Result<f64> {
    model.check_schema(x.schema_hash)?;
    if x.values.len() != model.feature_names.len() {
        return Err(Error::DimensionMismatch {
            left: model.feature_names.len(),
            right: x.values.len(),
        });
    }
    Ok(model.predict_row(&x.values))
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-15, 1 - 1e-15]`.
pub fn logloss(y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::DimensionMismatch {
            left: y.len(),
            right: p.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("logloss of an empty sample".into()));
    }
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&y, &p)| {
            let p = p.clamp(P_MIN, 1.0 - P_MIN);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

/// Per-round training logloss, index 0 being the prior before any tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub round_logloss: Vec<f64>,
}

pub fn train(data: &Dataset, hp: &Hyperparams) -> Result<GbdtModel> {
    train_with_log(data, hp).map(|(m, _)| m)
}

/// Second-order boosting on the logistic loss. Each tree's structure is found
/// on a row and column subsample; its leaves are then refit on all rows.
pub fn train_with_log(data: &Dataset, hp: &Hyperparams) -> Result<(GbdtModel, TrainLog)> {
    hp.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} training rows, need at least 2")));
    }
    let positives = data.n_positive();
    if positives == 0 || positives == n {
        return Err(Error::Precondition("training labels contain a single class".into()));
    }
    let n_features = data.schema.len();
    if n_features == 0 {
        return Err(Error::InsufficientData("no features".into()));
    }

    let sorted: Vec<Vec<u32>> = (0..n_features)
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| data.x[a as usize][f].total_cmp(&data.x[b as usize][f]));
            idx
        })
        .collect();

    let params = TreeParams {
        max_depth: hp.max_depth,
        min_child_weight: hp.min_child_weight,
        gamma: hp.gamma,
        lambda: hp.reg_lambda,
        learning_rate: hp.learning_rate,
    };
    let n_rows = ((hp.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((hp.colsample_bytree * n_features as f64).round() as usize).clamp(1, n_features);

    let base_score = 0.5;
    let mut margin = vec![log_odds(base_score); n];
    let mut prob: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
    let mut log = TrainLog {
        round_logloss: vec![logloss(&data.y, &prob)?],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut trees = Vec::with_capacity(hp.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..hp.n_estimators {
        for i in 0..n {
            grad[i] = prob[i] - data.y[i];
            hess[i] = prob[i] * (1.0 - prob[i]);
        }
        let mut rows = if n_rows == n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, n_rows).into_vec()
        };
        rows.sort_unstable();
        let mut cols = if n_cols == n_features {
            (0..n_features).collect()
        } else {
            index::sample(&mut rng, n_features, n_cols).into_vec()
        };
        cols.sort_unstable();

        let mut tree = tree::grow(&data.x, &sorted, &grad, &hess, &rows, &cols, params);
        if n_rows < n {
            tree.refit_leaves(&data.x, &grad, &hess, params.lambda, params.learning_rate);
        }
        margin
            .par_iter_mut()
            .zip(prob.par_iter_mut())
            .zip(data.x.par_iter())
            .for_each(|((m, p), row)| {
                *m += tree.predict(row);
                *p = sigmoid(*m);
            });
        log.round_logloss.push(logloss(&data.y, &prob)?);
        trees.push(tree);
    }

    let mut model = GbdtModel {
        version: String::new(),
        schema_hash: data.schema.hash(),
        feature_names: data.schema.names().to_vec(),
        hyperparams: *hp,
        base_score,
        trees,
    };
    model.version = model_version(&model);
    Ok((model, log))
}

/// `gbdt-` plus a digest prefix of the trees and hyperparameters.
fn model_version(m: &GbdtModel) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&m.trees).expect("trees serialize"));
    h.update(serde_json::to_vec(&m.hyperparams).expect("hyperparams serialize"));
    h.update(m.schema_hash.0);
    let digest = h.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("gbdt-{hex}")
}

/// Normalized gain-based importance in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub scores: Vec<(String, f64)>,
    /// True when the model has no splits at all; every score is then zero.
    pub no_splits: bool,
}

impl FeatureImportance {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Highest score first; equal scores keep schema order.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut out = self.scores.clone();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

pub fn feature_importance(model: &GbdtModel) -> FeatureImportance {
    let mut totals = vec![0.0; model.feature_names.len()];
    for tree in &model.trees {
        for (f, _, gain) in tree.splits() {
            totals[f] += gain;
        }
    }
    let sum: f64 = totals.iter().sum();
    let no_splits = sum <= 0.0;
    if no_splits {
        tracing::warn!("model has no splits; all importances are zero");
    } else {
        totals.iter_mut().for_each(|v| *v /= sum);
    }
    FeatureImportance {
        scores: model.feature_names.iter().cloned().zip(totals).collect(),
        no_splits,
    }
}

pub fn save_model(model: &GbdtModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(model).map_err(|e| Error::format("model", e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GbdtModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: GbdtModel =
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))?;
    validate_model(&model).map_err(|m| Error::format(path.display().to_string(), m))?;
    Ok(model)
}

fn validate_model(m: &GbdtModel) -> std::result::Result<(), String> {
    let unique: HashSet<&String> = m.feature_names.iter().collect();
    if unique.len() != m.feature_names.len() {
        return Err("duplicate feature names".into());
    }
    if !(m.base_score > 0.0 && m.base_score < 1.0) {
        return Err(format!("base_score {} outside (0, 1)", m.base_score));
    }
    for (t, tree) in m.trees.iter().enumerate() {
        if let Some((f, _, _)) = tree.splits().find(|(f, _, _)| *f >= m.feature_names.len()) {
            return Err(format!("tree {t} splits on feature {f}, schema has {}", m.feature_names.len()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let y = x.iter().map(|r| f64::from(u8::from(r[0] >= 0.0))).collect();
        Dataset::new(FeatureSchema::numbered(1), x, y).unwrap()
    }

    fn toy_params() -> Hyperparams {
        Hyperparams {
            n_estimators: 50,
            min_child_weight: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let hp = Hyperparams::default();
        assert_eq!(hp.subsample, 0.8);
        assert_eq!(hp.n_estimators, 300);
        assert_eq!(hp.min_child_weight, 5.0);
        assert_eq!(hp.max_depth, 4);
        assert_eq!(hp.gamma, 1.5);
        assert_eq!(hp.colsample_bytree, 0.8);
        assert_eq!(hp.learning_rate, 0.1);
        assert_eq!(hp.reg_lambda, 1.0);
    }

    #[test]
    fn logloss_examples() {
        assert!((logloss(&[1.0], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logloss(&[1.0, 0.0], &[1.0 - 1e-15, 1e-15]).unwrap() < 1e-14);
        assert!(logloss(&[1.0], &[0.5, 0.5]).is_err());
        assert!(logloss(&[1.0, 0.0], &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn empty_ensemble_predicts_half() {
        let hp = Hyperparams {
            n_estimators: 0,
            ..Default::default()
        };
        let m = train(&toy(), &hp).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.predict_row(&[3.0]), 0.5);
    }

    #[test]
    fn separable_toy() {
        let data = toy();
        let m = train(&data, &toy_params()).unwrap();
        let p = m.predict_dataset(&data).unwrap();
        let correct = p
            .iter()
            .zip(data.labels())
            .filter(|(p, y)| (**p >= DECISION_THRESHOLD) == (**y == 1.0))
            .count();
        assert_eq!(correct, 20);
        assert!(m.predict_row(&[-1.0]) < 0.5);
        assert!(m.predict_row(&[1.0]) > 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let d = Dataset::new(FeatureSchema::numbered(1), x, vec![1.0, 1.0]).unwrap();
        assert!(matches!(train(&d, &toy_params()), Err(Error::Precondition(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let x = vec![vec![f64::NAN], vec![1.0]];
        assert!(Dataset::new(FeatureSchema::numbered(1), x, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn schema_mismatch_on_predict() {
        let m = train(&toy(), &toy_params()).unwrap();
        let x = PairFeatures {
            values: vec![1.0],
            schema_hash: FeatureSchema::numbered(2).hash(),
        };
        assert!(matches!(predict_proba(&m, &x), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn set_by_name() {
        let mut hp = Hyperparams::default();
        hp.set("max_depth", 6.0).unwrap();
        assert_eq!(hp.max_depth, 6);
        assert!(hp.set("max_depth", 2.5).is_err());
        assert!(hp.set("eta", 0.3).is_err());
    }

    #[test]
    fn importance_single_feature() {
        let m = train(&toy(), &toy_params()).unwrap();
        let imp = feature_importance(&m);
        assert_eq!(imp.get("f0"), Some(1.0));
        assert!(!imp.no_splits);
    }
}
