use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logloss, train, Dataset, Hyperparams};
use crate::error::{Error, Result};

/// Ordered parameter grid: `(name, candidate values)`. The Cartesian product is
/// enumerated with the first parameter varying slowest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid(pub Vec<(String, Vec<f64>)>);

impl ParamGrid {
    pub fn new() -> Self {
        ParamGrid::default()
    }

    pub fn with(mut self, name: impl Into<String>, values: impl Into<Vec<f64>>) -> Self {
        self.0.push((name.into(), values.into()));
        self
    }

    pub fn n_combinations(&self) -> usize {
        self.0.iter().map(|(_, v)| v.len()).product()
    }

    /// Every combination applied on top of `base`, in grid order.
    pub fn expand(&self, base: &Hyperparams) -> Result<Vec<Hyperparams>> {
        if self.0.is_empty() || self.0.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Precondition("parameter grid is empty".into()));
        }
        let mut out = vec![*base];
        for (name, values) in &self.0 {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for hp in &out {
                for &v in values {
                    let mut hp = *hp;
                    hp.set(name, v)?;
                    hp.validate()?;
                    next.push(hp);
                }
            }
            out = next;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub best_logloss: f64,
    /// Mean cross-validated logloss per combination, in grid order.
    pub scores: Vec<(Hyperparams, f64)>,
}

/// Fold id per row. Each class is shuffled separately and dealt round-robin.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Precondition("need at least 2 folds".into()));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1.0).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1.0).collect();
    let smallest = pos.len().min(neg.len());
    if smallest < k {
        return Err(Error::Precondition(format!(
            "{k} folds but the smaller class has only {smallest} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0; labels.len()];
    for class in [&pos, &neg] {
        for (j, &i) in class.iter().enumerate() {
            fold[i] = j % k;
        }
    }
    Ok(fold)
}

/// Exhaustive search by stratified k-fold mean logloss. Ties go to the
/// earliest combination.
pub fn grid_search(data: &Dataset, base: &Hyperparams, grid: &ParamGrid, folds: usize) -> Result<GridResult> {
    let combos = grid.expand(base)?;
    let fold_of = stratified_folds(data.labels(), folds, base.seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold_of[i] == k);
            (data.subset(&train), data.subset(&test))
        })
        .collect();

    let mut scores = Vec::with_capacity(combos.len());
    for hp in combos {
        let mut total = 0.0;
        for (train_set, test_set) in &splits {
            let model = train(train_set, &hp)?;
            let p = model.predict_dataset(test_set)?;
            total += logloss(test_set.labels(), &p)?;
        }
        let mean = total / folds as f64;
        tracing::debug!(?hp, mean, "grid point");
        scores.push((hp, mean));
    }
    let (best, best_logloss) = scores
        .iter()
        .fold(None::<(Hyperparams, f64)>, |acc, &(hp, s)| match acc {
            Some((_, b)) if s >= b => acc,
            _ => Some((hp, s)),
        })
        .expect("grid has at least one combination");
    Ok(GridResult {
        best,
        best_logloss,
        scores,
    })
}
