//! Labeled training pairs, leakage-free train/test splitting and serving-time
//! candidate sets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BugReport, Corpus, DuplicateClusters};
use crate::embedding::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Featurizer};
use crate::gbdt::Dataset;

/// Largest allowed gap between the test positive rate and the overall rate.
pub const STRATIFY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    pub label: u8,
}

impl LabeledPair {
    /// Stores the ids in canonical order.
    pub fn new(a: &str, b: &str, label: u8) -> Self {
        let (id_a, id_b) = if a <= b { (a, b) } else { (b, a) };
        LabeledPair {
            id_a: id_a.to_owned(),
            id_b: id_b.to_owned(),
            label,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        if self.id_a <= self.id_b {
            (&self.id_a, &self.id_b)
        } else {
            (&self.id_b, &self.id_a)
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

fn positive_rate(pairs: &[LabeledPair]) -> f64 {
    if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().filter(|p| p.is_positive()).count() as f64 / pairs.len() as f64
    }
}

/// All within-cluster pairs as positives, plus `round(neg_per_pos * positives)`
/// negatives drawn uniformly from pairs that share product and component but
/// not a cluster. Fewer negatives are returned when not enough such pairs exist.
pub fn build_training_pairs(
    corpus: &Corpus,
    clusters: &DuplicateClusters,
    neg_per_pos: f64,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if !(neg_per_pos > 0.0 && neg_per_pos.is_finite()) {
        return Err(Error::Precondition("neg_per_pos must be positive".into()));
    }
    let mut pairs = Vec::new();
    for members in clusters.clusters() {
        let ids: Vec<&String> = members.iter().filter(|id| corpus.contains(id)).collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                pairs.push(LabeledPair::new(a, b, 1));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoPositives);
    }
    let wanted = (neg_per_pos * pairs.len() as f64).round() as usize;
    let negatives = sample_negatives(corpus, clusters, wanted, seed);
    if negatives.len() < wanted {
        tracing::warn!(wanted, got = negatives.len(), "not enough negative pairs available");
    }
    pairs.extend(negatives);
    Ok(pairs)
}

fn cells(corpus: &Corpus) -> Vec<Vec<&str>> {
    let mut by_cell: HashMap<(&str, &str), Vec<&str>> = HashMap::new();
    for bug in corpus {
        by_cell
            .entry((bug.product.as_str(), bug.component.as_str()))
            .or_default()
            .push(bug.id.as_str());
    }
    let mut keys: Vec<_> = by_cell.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| by_cell.remove(&k).unwrap())
        .filter(|ids| ids.len() >= 2)
        .collect()
}

fn sample_negatives(corpus: &Corpus, clusters: &DuplicateClusters, wanted: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = cells(corpus);
    let sizes: Vec<u64> = cells.iter().map(|c| (c.len() * (c.len() - 1) / 2) as u64).collect();
    let total: u64 = sizes.iter().sum();
    if wanted == 0 || total == 0 {
        return Vec::new();
    }

    // small spaces: enumerate and shuffle, so the cap is exact
    if total <= 4 * wanted as u64 + 1024 {
        let mut all = Vec::new();
        for ids in &cells {
            for (i, a) in ids.iter().enumerate() {
                for b in &ids[i + 1..] {
                    if !clusters.same_cluster(a, b) {
                        all.push(LabeledPair::new(a, b, 0));
                    }
                }
            }
        }
        all.shuffle(&mut rng);
        all.truncate(wanted);
        return all;
    }

    // large spaces: pick a cell with weight proportional to its pair count, then
    // two distinct members; reject same-cluster and repeated pairs
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(wanted);
    let max_draws = wanted.saturating_mul(50);
    for _ in 0..max_draws {
        if out.len() == wanted {
            break;
        }
        let mut r = rng.random_range(0..total);
        let cell = sizes
            .iter()
            .position(|&s| {
                if r < s {
                    true
                } else {
                    r -= s;
                    false
                }
            })
            .expect("r < total");
        let ids = &cells[cell];
        let i = rng.random_range(0..ids.len());
        let mut j = rng.random_range(0..ids.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (ids[i], ids[j]);
        if clusters.same_cluster(a, b) {
            continue;
        }
        let pair = LabeledPair::new(a, b, 0);
        if seen.insert((pair.id_a.clone(), pair.id_b.clone())) {
            out.push(pair);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub requested_test_fraction: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    /// Pairs with one id on each side, dropped to keep the id sets disjoint.
    pub dropped_straddling: usize,
    /// Test pairs dropped to bring the positive rate within tolerance.
    pub dropped_for_stratification: usize,
    pub overall_positive_rate: f64,
    pub train_positive_rate: f64,
    pub test_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestSplit {
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub report: SplitReport,
}

/// Group split by bug id.
///
/// Bugs are grouped by connected components of the positive pairs (duplicate
/// clusters; other bugs form singleton groups). Groups are shuffled and moved
/// to the test side until the test pairs that will survive stratification
/// reach `test_fraction` of all retained pairs. Pairs with one id on each side are dropped. Test pairs are
/// then trimmed, at random, until the test positive rate is within
/// [`STRATIFY_TOLERANCE`] of the positive rate of the input.
pub fn train_test_split(pairs: &[LabeledPair], test_fraction: f64, seed: u64) -> Result<TrainTestSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Precondition("test_fraction must be in (0, 1)".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.id_a == p.id_b) {
        return Err(Error::Precondition(format!("pair links {} to itself", p.id_a)));
    }
    let mut seen = HashSet::new();
    if let Some(p) = pairs.iter().find(|p| !seen.insert(p.key())) {
        return Err(Error::Precondition(format!("pair {}/{} appears twice", p.id_a, p.id_b)));
    }
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} pairs, need at least 2", pairs.len())));
    }

    // ids in first-seen order, so the grouping is independent of hashing
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut ids: Vec<&str> = Vec::new();
    for p in pairs {
        for id in [p.id_a.as_str(), p.id_b.as_str()] {
            index.entry(id).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            });
        }
    }
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in pairs.iter().filter(|p| p.is_positive()) {
        let (a, b) = (find(&mut parent, index[p.id_a.as_str()]), find(&mut parent, index[p.id_b.as_str()]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..ids.len() {
        let root = find(&mut parent, i);
        let g = *group_of_root.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (k, p) in pairs.iter().enumerate() {
        incident[index[p.id_a.as_str()]].push(k);
        incident[index[p.id_b.as_str()]].push(k);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);

    // Groups are added until the test side, after stratification trimming,
    // holds `test_fraction` of the retained pairs.
    let overall = positive_rate(pairs);
    let trimmed_size = |pos: usize, neg: usize| -> f64 {
        let (pos, neg) = (pos as f64, neg as f64);
        if overall <= 0.0 {
            neg
        } else if overall >= 1.0 {
            pos
        } else {
            (pos / overall).min(neg / (1.0 - overall))
        }
    };
    let mut on_test = vec![false; ids.len()];
    let (mut test_pos, mut test_neg, mut n_train) = (0usize, 0usize, pairs.len());
    for g in order {
        let t = trimmed_size(test_pos, test_neg);
        if t > 0.0 && t >= test_fraction * (t + n_train as f64) {
            break;
        }
        for &id in &groups[g] {
            on_test[id] = true;
            for &k in &incident[id] {
                let p = &pairs[k];
                let other = if index[p.id_a.as_str()] == id { index[p.id_b.as_str()] } else { index[p.id_a.as_str()] };
                if on_test[other] {
                    // was straddling, now fully on test
                    if p.is_positive() {
                        test_pos += 1;
                    } else {
                        test_neg += 1;
                    }
                } else {
                    n_train -= 1;
                }
            }
        }
    }

    let side = |p: &LabeledPair| (on_test[index[p.id_a.as_str()]], on_test[index[p.id_b.as_str()]]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut straddling = 0;
    for p in pairs {
        match side(p) {
            (true, true) => test.push(p.clone()),
            (false, false) => train.push(p.clone()),
            _ => straddling += 1,
        }
    }

    let before = test.len();
    stratify(&mut test, overall, &mut rng)?;
    if train.is_empty() {
        return Err(Error::InsufficientData("group split left no training pairs".into()));
    }
    let report = SplitReport {
        requested_test_fraction: test_fraction,
        train_pairs: train.len(),
        test_pairs: test.len(),
        dropped_straddling: straddling,
        dropped_for_stratification: before - test.len(),
        overall_positive_rate: overall,
        train_positive_rate: positive_rate(&train),
        test_positive_rate: positive_rate(&test),
    };
    Ok(TrainTestSplit { train, test, report })
}

/// Drops random positives or negatives from `test` until its positive rate is
/// within tolerance of `target`.
fn stratify(test: &mut Vec<LabeledPair>, target: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let pos = test.iter().filter(|p| p.is_positive()).count();
    let neg = test.len() - pos;
    let ok = |p: usize, n: usize| p + n > 0 && ((p as f64 / (p + n) as f64) - target).abs() <= STRATIFY_TOLERANCE;
    if ok(pos, neg) {
        return Ok(());
    }
    let (mut keep_pos, mut keep_neg) = (pos, neg);
    let too_positive = pos as f64 / test.len().max(1) as f64 > target;
    while !ok(keep_pos, keep_neg) {
        let exhausted = if too_positive { keep_pos == 0 } else { keep_neg == 0 };
        if exhausted {
            return Err(Error::InsufficientData(format!(
                "cannot stratify test side: {pos} positives, {neg} negatives, target rate {target:.3}"
            )));
        }
        if too_positive {
            keep_pos -= 1;
        } else {
            keep_neg -= 1;
        }
    }
    let drop_label = u8::from(too_positive);
    let n_drop = if too_positive { pos - keep_pos } else { neg - keep_neg };
    let mut candidates: Vec<usize> = (0..test.len()).filter(|&i| test[i].label == drop_label).collect();
    candidates.shuffle(rng);
    let dropped: HashSet<usize> = candidates.into_iter().take(n_drop).collect();
    let mut i = 0;
    test.retain(|_| {
        let keep = !dropped.contains(&i);
        i += 1;
        keep
    });
    Ok(())
}

/// Stored bugs with the same product and component as `new_bug`, newest first
/// (ties by id), excluding `new_bug` itself.
pub fn candidate_set<'a>(new_bug: &BugReport, corpus: &'a Corpus) -> Vec<&'a BugReport> {
    let mut out: Vec<&BugReport> = corpus
        .iter()
        .filter(|b| b.id != new_bug.id && b.product == new_bug.product && b.component == new_bug.component)
        .collect();
    out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
    out
}

/// Features for every pair. Each bug is profiled once.
pub fn featurize_pairs<B: EmbeddingBackend + ?Sized>(
    pairs: &[LabeledPair],
    corpus: &Corpus,
    featurizer: &Featurizer,
    store: &B,
) -> Result<Dataset> {
    let ids: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.id_a.as_str(), p.id_b.as_str()]).collect();
    let mut subset = Corpus::default();
    for id in ids {
        let bug = corpus.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))?;
        subset.push(bug.clone())?;
    }
    let profiles = featurizer.profile_corpus(&subset, store);
    let id_pairs: Vec<(String, String)> = pairs.iter().map(|p| (p.id_a.clone(), p.id_b.clone())).collect();
    let rows = featurizer.pairs_from_profiles(&profiles, &id_pairs)?;
    Dataset::new(
        featurizer.schema(),
        rows.into_iter().map(|r| r.values).collect(),
        pairs.iter().map(|p| f64::from(p.label)).collect(),
    )
}

/// `id_a,id_b,label` with a header row.
pub fn write_pairs_csv(pairs: &[LabeledPair], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in pairs {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<LabeledPair>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<LabeledPair>() {
        let p = row.map_err(|e| csv_error(path, e))?;
        if p.label > 1 {
            return Err(Error::format(path.display().to_string(), format!("label {} is not 0 or 1", p.label)));
        }
        out.push(p);
    }
    Ok(out)
}

/// `id_a,id_b,label,<feature names...>`: pairs with their feature rows.
pub fn write_feature_table(pairs: &[LabeledPair], data: &Dataset, path: &Path) -> Result<()> {
    if pairs.len() != data.len() {
        return Err(Error::DimensionMismatch {
            left: pairs.len(),
            right: data.len(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id_a".to_owned(), "id_b".to_owned(), "label".to_owned()];
    header.extend(data.schema().names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (p, row) in pairs.iter().zip(data.rows()) {
        let mut rec = vec![p.id_a.clone(), p.id_b.clone(), p.label.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path) -> Result<(Vec<LabeledPair>, Dataset)> {
    let ctx = || path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "id_a" || &header[1] != "id_b" || &header[2] != "label" {
        return Err(Error::format(ctx(), "header must start with id_a,id_b,label"));
    }
    let schema = FeatureSchema::new(header.iter().skip(3).map(str::to_owned))?;
    let mut pairs = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let label: u8 = rec[2]
            .parse()
            .map_err(|_| Error::format(ctx(), format!("row {}: bad label {:?}", n + 1, &rec[2])))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().skip(3).map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::format(ctx(), format!("row {}: {e}", n + 1)))?;
        pairs.push(LabeledPair::new(&rec[0], &rec[1], label));
        x.push(row);
        y.push(f64::from(label));
    }
    Ok((pairs, Dataset::new(schema, x, y)?))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path.display().to_string(), e)
    }
}
