//! Bug reports, corpus persistence, validity filtering and duplicate clusters.

mod rest;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::preprocess;

pub use rest::{ingest_rest, map_remote_record, parse_remote_dump, RestIngest};

/// Reports whose cleaned description is shorter than this are dropped.
pub const MIN_DESCRIPTION_CHARS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Severity {
    High,
    Medium,
    Low,
    VeryLow,
    #[default]
    Unknown,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::High => "high",
            Severity::Medium => "medium",
            Severity::Low => "low",
            Severity::VeryLow => "very_low",
            Severity::Unknown => "unknown",
        }
    }

    /// Anything outside high/medium/low/very low is `Unknown`.
    pub fn parse_lenient(s: &str) -> Severity {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "high" => Severity::High,
            "medium" => Severity::Medium,
            "low" => Severity::Low,
            "very_low" | "verylow" => Severity::VeryLow,
            _ => Severity::Unknown,
        }
    }
}

impl Serialize for Severity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        Ok(s.map_or(Severity::Unknown, |s| Severity::parse_lenient(&s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    New,
    Assigned,
    Duplicate,
    Resolved,
    Closed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::New => "new",
            Status::Assigned => "assigned",
            Status::Duplicate => "duplicate",
            Status::Resolved => "resolved",
            Status::Closed => "closed",
        };
        f.write_str(s)
    }
}

fn null_as_empty<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(Option::<String>::deserialize(d)?.unwrap_or_default())
}

/// One tracked issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub headline: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub description: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub project: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub product: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub component: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub version: String,
    #[serde(deserialize_with = "null_as_empty")]
    pub hardware: String,
    pub severity: Severity,
    pub status: Status,
    pub duplicate_of: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl BugReport {
    /// A new-status report with only the text and routing fields filled in.
    pub fn new(
        id: impl Into<String>,
        headline: impl Into<String>,
        description: impl Into<String>,
        product: impl Into<String>,
        component: impl Into<String>,
    ) -> Self {
        BugReport {
            id: id.into(),
            headline: headline.into(),
            description: description.into(),
            project: String::new(),
            product: product.into(),
            component: component.into(),
            version: String::new(),
            hardware: String::new(),
            severity: Severity::Unknown,
            status: Status::New,
            duplicate_of: None,
            created_at: DateTime::UNIX_EPOCH,
        }
    }

    /// Text used for features and embeddings: headline, a space, description.
    pub fn text(&self) -> String {
        format!("{} {}", self.headline, self.description)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Precondition("bug id is empty".into()));
        }
        match (&self.status, &self.duplicate_of) {
            (Status::Duplicate, None) => Err(Error::Precondition(format!(
                "bug {} has status duplicate but no duplicate_of",
                self.id
            ))),
            (s, Some(_)) if *s != Status::Duplicate => Err(Error::Precondition(format!(
                "bug {} has duplicate_of but status {s}",
                self.id
            ))),
            (_, Some(target)) if *target == self.id => Err(Error::Precondition(format!(
                "bug {} is marked as a duplicate of itself",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// Records that were dropped while reading some source, with the reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub skipped: usize,
    pub reasons: Vec<String>,
}

impl SkipReport {
    pub(crate) fn record(&mut self, reason: String) {
        self.skipped += 1;
        self.reasons.push(reason);
    }

    pub fn merge(&mut self, other: SkipReport) {
        self.skipped += other.skipped;
        self.reasons.extend(other.reasons);
    }
}

/// Ordered collection of bug reports with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    bugs: Vec<BugReport>,
    index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.bugs == other.bugs
    }
}

impl Corpus {
    pub fn new(bugs: Vec<BugReport>) -> Result<Self> {
        let mut corpus = Corpus {
            bugs: Vec::with_capacity(bugs.len()),
            index: HashMap::with_capacity(bugs.len()),
        };
        for bug in bugs {
            corpus.push(bug)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, bug: BugReport) -> Result<()> {
        if self.index.contains_key(&bug.id) {
            return Err(Error::DuplicateId(bug.id));
        }
        self.index.insert(bug.id.clone(), self.bugs.len());
        self.bugs.push(bug);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&BugReport> {
        self.index.get(id).map(|&i| &self.bugs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn bugs(&self) -> &[BugReport] {
        &self.bugs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BugReport> {
        self.bugs.iter()
    }

    pub fn len(&self) -> usize {
        self.bugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bugs.is_empty()
    }

    pub fn into_bugs(self) -> Vec<BugReport> {
        self.bugs
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a BugReport;
    type IntoIter = std::slice::Iter<'a, BugReport>;

    fn into_iter(self) -> Self::IntoIter {
        self.bugs.iter()
    }
}

/// Reads a JSONL corpus. Lines that fail to parse or validate are skipped and
/// counted; a repeated id is fatal.
pub fn load_jsonl(path: &Path) -> Result<(Corpus, SkipReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::default();
    let mut skips = SkipReport::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bug = match serde_json::from_str::<BugReport>(&line) {
            Ok(bug) => bug,
            Err(e) => {
                skips.record(format!("line {}: {e}", n + 1));
                continue;
            }
        };
        if let Err(e) = bug.validate() {
            skips.record(format!("line {}: {e}", n + 1));
            continue;
        }
        corpus.push(bug)?;
    }
    Ok((corpus, skips))
}

pub fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for bug in corpus {
        serde_json::to_writer(&mut out, bug).map_err(|e| Error::format("corpus", e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub kept: usize,
    pub empty_text: usize,
    pub short_description: usize,
}

/// Drops reports with no headline and no description, and reports whose cleaned
/// description has fewer than [`MIN_DESCRIPTION_CHARS`] characters.
pub fn filter_invalid(corpus: &Corpus) -> Corpus {
    filter_invalid_with_report(corpus).0
}

pub fn filter_invalid_with_report(corpus: &Corpus) -> (Corpus, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Corpus::default();
    for bug in corpus {
        if bug.headline.trim().is_empty() && bug.description.trim().is_empty() {
            report.empty_text += 1;
        } else if preprocess::clean_string(&bug.description).chars().count() < MIN_DESCRIPTION_CHARS {
            report.short_description += 1;
        } else {
            kept.push(bug.clone()).expect("ids are unique in the source corpus");
        }
    }
    report.kept = kept.len();
    (kept, report)
}

/// Connected components of the duplicate-of relation, restricted to bugs that
/// are present in the corpus. Only components with two or more members are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DuplicateClusters {
    cluster_of: HashMap<String, usize>,
    clusters: Vec<BTreeSet<String>>,
}

impl DuplicateClusters {
    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.cluster_of.get(id).copied()
    }

    pub fn clusters(&self) -> &[BTreeSet<String>] {
        &self.clusters
    }

    pub fn members(&self, cluster: usize) -> Option<&BTreeSet<String>> {
        self.clusters.get(cluster)
    }

    pub fn same_cluster(&self, a: &str, b: &str) -> bool {
        matches!((self.cluster_of(a), self.cluster_of(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Transitive, symmetric closure of duplicate links. Cluster ids are assigned in
/// order of each cluster's earliest member in the corpus.
pub fn duplicate_clusters(corpus: &Corpus) -> DuplicateClusters {
    let mut uf = UnionFind::new(corpus.len());
    let mut linked = vec![false; corpus.len()];
    for (i, bug) in corpus.iter().enumerate() {
        if let Some(j) = bug.duplicate_of.as_deref().and_then(|t| corpus.position(t)) {
            if i != j {
                uf.union(i, j);
                linked[i] = true;
                linked[j] = true;
            }
        }
    }

    let mut root_to_cluster: HashMap<usize, usize> = HashMap::new();
    let mut out = DuplicateClusters::default();
    for (i, bug) in corpus.iter().enumerate() {
        if !linked[i] {
            continue;
        }
        let root = uf.find(i);
        let next = root_to_cluster.len();
        let cluster = *root_to_cluster.entry(root).or_insert(next);
        if cluster == out.clusters.len() {
            out.clusters.push(BTreeSet::new());
        }
        out.clusters[cluster].insert(bug.id.clone());
        out.cluster_of.insert(bug.id.clone(), cluster);
    }
    out
}
