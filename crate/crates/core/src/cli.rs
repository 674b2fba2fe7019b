//! Command-line driver. Each stage reads and writes files so it can run and be
//! checked on its own; every run also writes a JSON manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{
    duplicate_clusters, filter_invalid_with_report, ingest_rest, load_jsonl, parse_remote_dump, save_jsonl, BugReport,
    RestIngest,
};
use crate::embedding::{load_vec_file, WordVectorStore};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, rank_candidates};
use crate::features::{Featurizer, PosTagger};
use crate::gbdt::{
    feature_importance, grid_search, load_model, save_model, train_with_log, Hyperparams, ParamGrid, DECISION_THRESHOLD,
};
use crate::pairs::{build_training_pairs, featurize_pairs, read_pairs_csv, train_test_split, write_pairs_csv};
use crate::preprocess::CleanConfig;
use crate::serve::{self, Role, ServeConfig};
use crate::synth::{generate, write_vec, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "bugdedup", version, about = "Duplicate bug report detection")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Where to write the run manifest. Defaults to a file next to the main output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// More logging on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch bugs from a REST endpoint or convert a saved dump into corpus JSONL.
    Ingest(IngestArgs),
    /// Drop reports with no usable text and write the filtered corpus.
    Clean(CleanArgs),
    /// Build labeled pairs and split them into train and test files.
    Pairs(PairsArgs),
    /// Train the classifier on a pairs file.
    Train(TrainArgs),
    /// Score a model on a pairs file.
    Eval(EvalArgs),
    /// Show normalized split-gain importance per feature.
    Importance(ImportanceArgs),
    /// Run the app, model and/or embedding servers.
    Serve(ServeArgs),
    /// Rank stored bugs as duplicates of a new report.
    Predict(PredictArgs),
    /// Write the seeded synthetic corpus and its word vectors.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Rest,
    File,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    /// REST search endpoint, e.g. https://bugzilla.mozilla.org/rest/bug
    #[arg(long, required_if_eq("source", "rest"))]
    pub endpoint: Option<String>,
    /// Extra query parameter `key=value`; repeatable.
    #[arg(long = "query", value_parser = parse_key_value)]
    pub query: Vec<(String, String)>,
    #[arg(long, default_value_t = 500)]
    pub page_size: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_bugs: usize,
    #[arg(long, env = "BUGZILLA_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Fetch the first comment when a record has no description.
    #[arg(long)]
    pub fetch_comments: bool,
    /// Saved REST response (`{"bugs": [...]}`) or corpus JSONL.
    #[arg(long, required_if_eq("source", "file"))]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub neg_per_pos: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
}

/// Text processing inputs shared by the featurizing commands.
#[derive(Debug, Args, Clone)]
pub struct TextArgs {
    /// Word vectors in the text `.vec` format.
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long)]
    pub pos_lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub text: TextArgs,
    /// Training seed (row and column sampling).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hyperparameter override `name=value`; repeatable.
    #[arg(long = "hp", value_parser = parse_key_number)]
    pub hp: Vec<(String, f64)>,
    /// Grid axis `name=v1,v2,...`; repeatable. Enables cross-validated search.
    #[arg(long = "grid", value_parser = parse_grid_axis)]
    pub grid: Vec<(String, Vec<f64>)>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-round training logloss as JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long, default_value_t = DECISION_THRESHOLD)]
    pub threshold: f64,
    /// Metrics JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Only the top N features.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub role: RoleArg,
    /// TOML config; `BUGDEDUP_*` environment variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    App,
    Model,
    Embed,
    All,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::App => Role::App,
            RoleArg::Model => Role::Model,
            RoleArg::Embed => Role::Embed,
            RoleArg::All => Role::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long, default_value = "")]
    pub headline: String,
    #[arg(long, default_value = "")]
    pub description: String,
    #[arg(long)]
    pub product: String,
    #[arg(long, default_value = "")]
    pub project: String,
    #[arg(long)]
    pub component: String,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n_bugs: usize,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn parse_key_number(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = parse_key_value(s)?;
    let v = v.parse().map_err(|_| format!("{v:?} is not a number"))?;
    Ok((k, v))
}

fn parse_grid_axis(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let (k, v) = parse_key_value(s)?;
    let values = v
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("{x:?} is not a number")))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    Ok((k, values))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let hash = Sha256::digest(&data);
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes: data.len() as u64,
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Inputs, outputs, parameters and timings of one command run.
#[derive(Debug, Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    started_at: DateTime<Utc>,
    seed: Option<u64>,
    params: Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    durations_ms: BTreeMap<String, u128>,
    summary: Value,
}

struct Run {
    manifest: Manifest,
    clock: Instant,
    stage: Instant,
}

impl Run {
    fn new(command: &'static str, inputs: &[&Path]) -> Result<Run> {
        for p in inputs {
            if !p.exists() {
                return Err(Error::io(
                    *p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file does not exist"),
                ));
            }
        }
        Ok(Run {
            manifest: Manifest {
                command,
                version: env!("CARGO_PKG_VERSION"),
                started_at: Utc::now(),
                seed: None,
                params: Value::Null,
                inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
                outputs: Vec::new(),
                durations_ms: BTreeMap::new(),
                summary: Value::Null,
            },
            clock: Instant::now(),
            stage: Instant::now(),
        })
    }

    fn lap(&mut self, name: &str) {
        self.manifest
            .durations_ms
            .insert(name.to_owned(), self.stage.elapsed().as_millis());
        self.stage = Instant::now();
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(digest(path)?);
        Ok(())
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest
            .durations_ms
            .insert("total".into(), self.clock.elapsed().as_millis());
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::format("manifest", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn featurizer(t: &TextArgs) -> Result<Featurizer> {
    let clean = CleanConfig::from_files(t.stopwords.as_deref(), t.synonyms.as_deref())?;
    let tagger = match &t.pos_lexicon {
        Some(p) => PosTagger::load(p)?,
        None => PosTagger::default(),
    };
    Ok(Featurizer::new(clean, tagger))
}

fn text_inputs(t: &TextArgs) -> Vec<&Path> {
    let mut v = vec![t.vectors.as_path()];
    v.extend([&t.stopwords, &t.synonyms, &t.pos_lexicon].into_iter().flatten().map(PathBuf::as_path));
    v
}

fn vectors(path: &Path) -> Result<WordVectorStore> {
    let (store, skipped) = load_vec_file(path)?;
    if skipped.skipped > 0 {
        tracing::warn!(skipped = skipped.skipped, "vector lines skipped");
    }
    Ok(store)
}

fn print_json(v: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(v).map_err(|e| Error::format("output", e))?;
    println!("{line}");
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start async runtime: {e}")))
}

fn ingest(a: &IngestArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let inputs: Vec<&Path> = a.input.iter().map(PathBuf::as_path).collect();
    let mut run = Run::new("ingest", &inputs)?;
    let (corpus, skips) = match a.source {
        Source::Rest => {
            let mut req = RestIngest::new(a.endpoint.clone().unwrap_or_default(), a.page_size, a.max_bugs);
            req.query = a.query.clone();
            req.api_key = a.api_key.clone();
            req.fetch_first_comment = a.fetch_comments;
            let client = reqwest::Client::builder()
                .timeout(std::time::Duration::from_secs(60))
                .build()
                .map_err(|e| Error::Downstream {
                    service: "rest".into(),
                    message: e.to_string(),
                })?;
            runtime()?.block_on(ingest_rest(&client, &req))?
        }
        Source::File => {
            let input = a.input.as_deref().expect("clap requires --input for file");
            if input.extension().is_some_and(|e| e == "jsonl") {
                load_jsonl(input)?
            } else {
                parse_remote_dump(input)?
            }
        }
    };
    run.lap("fetch");
    save_jsonl(&corpus, &a.out)?;
    run.output(&a.out)?;
    let clusters = duplicate_clusters(&corpus);
    let summary = json!({
        "bugs": corpus.len(),
        "skipped": skips.skipped,
        "duplicate_clusters": clusters.len(),
        "skip_reasons": skips.reasons.iter().take(20).collect::<Vec<_>>(),
    });
    run.manifest.params = json!({ "source": format!("{:?}", a.source).to_lowercase(), "endpoint": a.endpoint, "max_bugs": a.max_bugs });
    if json_out {
        print_json(&summary)?;
    } else {
        println!("ingested {} bugs ({} skipped, {} duplicate clusters)", corpus.len(), skips.skipped, clusters.len());
    }
    run.manifest.summary = summary;
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.out, ".manifest.json")))
}

fn clean(a: &CleanArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("clean", &[&a.corpus])?;
    let (corpus, skips) = load_jsonl(&a.corpus)?;
    let (kept, report) = filter_invalid_with_report(&corpus);
    run.lap("filter");
    save_jsonl(&kept, &a.out)?;
    run.output(&a.out)?;
    let summary = json!({ "filter": report, "unreadable_lines": skips.skipped });
    if json_out {
        print_json(&summary)?;
    } else {
        println!(
            "kept {} of {} bugs (empty text {}, short description {}, unreadable lines {})",
            report.kept,
            corpus.len(),
            report.empty_text,
            report.short_description,
            skips.skipped
        );
    }
    run.manifest.summary = summary;
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.out, ".manifest.json")))
}

fn pairs(a: &PairsArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("pairs", &[&a.corpus])?;
    run.manifest.seed = Some(a.seed);
    run.manifest.params = json!({ "neg_per_pos": a.neg_per_pos, "test_fraction": a.test_fraction });
    let (corpus, _) = load_jsonl(&a.corpus)?;
    let clusters = duplicate_clusters(&corpus);
    let all = build_training_pairs(&corpus, &clusters, a.neg_per_pos, a.seed)?;
    let split = train_test_split(&all, a.test_fraction, a.seed)?;
    run.lap("build");
    write_pairs_csv(&split.train, &a.out_train)?;
    write_pairs_csv(&split.test, &a.out_test)?;
    run.output(&a.out_train)?;
    run.output(&a.out_test)?;
    let summary = json!({ "pairs": all.len(), "split": split.report });
    if json_out {
        print_json(&summary)?;
    } else {
        let r = &split.report;
        println!(
            "{} pairs: {} train, {} test ({} straddling and {} stratification drops); positive rate {:.3}/{:.3}",
            all.len(),
            r.train_pairs,
            r.test_pairs,
            r.dropped_straddling,
            r.dropped_for_stratification,
            r.train_positive_rate,
            r.test_positive_rate
        );
    }
    run.manifest.summary = summary;
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.out_train, ".manifest.json")))
}

fn train(a: &TrainArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut inputs = vec![a.corpus.as_path(), a.pairs.as_path()];
    inputs.extend(text_inputs(&a.text));
    let mut run = Run::new("train", &inputs)?;
    let mut hp = Hyperparams {
        seed: a.seed,
        ..Default::default()
    };
    for (k, v) in &a.hp {
        hp.set(k, *v)?;
    }
    hp.validate()?;
    run.manifest.seed = Some(a.seed);

    let (corpus, _) = load_jsonl(&a.corpus)?;
    let pairs = read_pairs_csv(&a.pairs)?;
    let store = vectors(&a.text.vectors)?;
    let f = featurizer(&a.text)?;
    run.lap("load");
    let data = featurize_pairs(&pairs, &corpus, &f, &store)?;
    run.lap("featurize");

    let mut grid_scores = Value::Null;
    if !a.grid.is_empty() {
        let grid = ParamGrid(a.grid.clone());
        let result = grid_search(&data, &hp, &grid, a.folds)?;
        hp = result.best;
        grid_scores = json!({ "best_logloss": result.best_logloss, "scores": result.scores });
        run.lap("grid_search");
    }
    let (model, log) = train_with_log(&data, &hp)?;
    run.lap("train");
    save_model(&model, &a.out)?;
    run.output(&a.out)?;
    if let Some(p) = &a.log {
        let text = serde_json::to_string(&log).map_err(|e| Error::format("training log", e))?;
        std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
        run.output(p)?;
    }
    run.manifest.params = json!({ "hyperparams": hp, "grid": grid_scores });
    let first = log.round_logloss[0];
    let last = *log.round_logloss.last().expect("prior entry");
    let summary = json!({
        "model_version": model.version,
        "rows": data.len(),
        "positives": data.n_positive(),
        "trees": model.trees.len(),
        "logloss_prior": first,
        "logloss_final": last,
        "non_finite_replaced": f.non_finite_replaced(),
    });
    if json_out {
        print_json(&summary)?;
    } else {
        println!(
            "trained {} trees on {} pairs: logloss {first:.4} -> {last:.4}, version {}",
            model.trees.len(),
            data.len(),
            model.version
        );
    }
    run.manifest.summary = summary;
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.out, ".manifest.json")))
}

fn eval(a: &EvalArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut inputs = vec![a.model.as_path(), a.corpus.as_path(), a.pairs.as_path()];
    inputs.extend(text_inputs(&a.text));
    let mut run = Run::new("eval", &inputs)?;
    run.manifest.params = json!({ "threshold": a.threshold });
    let model = load_model(&a.model)?;
    let (corpus, _) = load_jsonl(&a.corpus)?;
    let pairs = read_pairs_csv(&a.pairs)?;
    let store = vectors(&a.text.vectors)?;
    let f = featurizer(&a.text)?;
    model.check_schema(f.schema_hash())?;
    run.lap("load");
    let report = evaluate_model(&model, &pairs, &corpus, &store, &f, a.threshold)?;
    run.lap("evaluate");
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::format("metrics", e))?;
    std::fs::write(&a.out, text + "\n").map_err(|e| Error::io(&a.out, e))?;
    run.output(&a.out)?;
    if json_out {
        print_json(&report)?;
    } else {
        println!("{report}");
    }
    run.manifest.summary = serde_json::to_value(&report).map_err(|e| Error::format("metrics", e))?;
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.out, ".manifest.json")))
}

fn importance(a: &ImportanceArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("importance", &[&a.model])?;
    let model = load_model(&a.model)?;
    let imp = feature_importance(&model);
    let mut ranked = imp.ranked();
    if let Some(n) = a.top {
        ranked.truncate(n);
    }
    if json_out {
        let rows: Vec<Value> = ranked.iter().map(|(n, v)| json!({ "feature": n, "importance": v })).collect();
        print_json(&json!({ "no_splits": imp.no_splits, "importance": rows }))?;
    } else {
        let width = ranked.iter().map(|(n, _)| n.len()).max().unwrap_or(7).max(7);
        println!("{:<width$} {:>10}", "Feature", "Importance");
        for (n, v) in &ranked {
            println!("{n:<width$} {v:>10.6}");
        }
        if imp.no_splits {
            println!("(model has no splits)");
        }
    }
    run.manifest.summary = json!({ "no_splits": imp.no_splits, "features": ranked.len() });
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.model, ".importance.manifest.json")))
}

fn predict(a: &PredictArgs, manifest: Option<PathBuf>) -> Result<()> {
    let mut inputs = vec![a.model.as_path(), a.corpus.as_path()];
    inputs.extend(text_inputs(&a.text));
    let mut run = Run::new("predict", &inputs)?;
    let model = load_model(&a.model)?;
    let (corpus, _) = load_jsonl(&a.corpus)?;
    let store = vectors(&a.text.vectors)?;
    let f = featurizer(&a.text)?;
    run.lap("load");
    let request = crate::serve::CheckRequest {
        headline: a.headline.clone(),
        description: a.description.clone(),
        project: a.project.clone(),
        product: a.product.clone(),
        component: a.component.clone(),
    };
    let bad = request.invalid_fields();
    if !bad.is_empty() {
        return Err(Error::Precondition(format!("invalid fields: {}", bad.join(", "))));
    }
    let mut bug = BugReport::new("", &a.headline, &a.description, &a.product, &a.component);
    bug.project = a.project.clone();
    bug.created_at = Utc::now();
    let ranked = rank_candidates(&bug, &corpus, &model, &store, &f, a.top_k)?;
    run.lap("rank");
    for c in &ranked {
        print_json(c)?;
    }
    run.manifest.params = json!({ "top_k": a.top_k, "product": a.product, "component": a.component });
    run.manifest.summary = json!({ "candidates": ranked.len(), "model_version": model.version });
    run.finish(&manifest.unwrap_or_else(|| with_suffix(&a.model, ".predict.manifest.json")))
}

fn synth(a: &SynthArgs, json_out: bool, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("synth", &[])?;
    run.manifest.seed = Some(a.seed);
    let cfg = SynthConfig {
        n_bugs: a.n_bugs,
        dim: a.dim,
        seed: a.seed,
        ..Default::default()
    };
    let s = generate(&cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let corpus_path = a.out_dir.join("corpus.jsonl");
    let vec_path = a.out_dir.join("vectors.vec");
    let planted_path = a.out_dir.join("planted.jsonl");
    save_jsonl(&s.corpus, &corpus_path)?;
    write_vec(&s.vectors, &vec_path)?;
    let mut planted = Vec::new();
    for p in &s.planted {
        let line = serde_json::to_string(&json!({ "bug": p.bug, "cluster": p.cluster }))
            .map_err(|e| Error::format("planted", e))?;
        planted.push(line);
    }
    std::fs::write(&planted_path, planted.join("\n") + "\n").map_err(|e| Error::io(&planted_path, e))?;
    for p in [&corpus_path, &vec_path, &planted_path] {
        run.output(p)?;
    }
    let summary = json!({
        "bugs": s.corpus.len(),
        "templates": s.n_templates,
        "clusters": duplicate_clusters(&s.corpus).len(),
        "vocab": s.vectors.vocab_size(),
        "planted": s.planted.len(),
    });
    if json_out {
        print_json(&summary)?;
    } else {
        println!(
            "wrote {} bugs from {} templates, {} words of vectors, {} planted queries to {}",
            s.corpus.len(),
            s.n_templates,
            s.vectors.vocab_size(),
            s.planted.len(),
            a.out_dir.display()
        );
    }
    run.manifest.params = json!({ "n_bugs": a.n_bugs, "dim": a.dim });
    run.manifest.summary = summary;
    run.finish(&manifest.unwrap_or_else(|| a.out_dir.join("synth.manifest.json")))
}

fn serve_cmd(a: &ServeArgs, manifest: Option<PathBuf>) -> Result<()> {
    let cfg = ServeConfig::load(a.config.as_deref())?;
    let inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    let mut run = Run::new("serve", &inputs)?;
    run.manifest.params = serde_json::to_value(&cfg).map_err(|e| Error::format("config", e))?;
    let rt = runtime()?;
    rt.block_on(async {
        let running = serve::start(a.role.into(), &cfg).await?;
        let mut addrs = BTreeMap::new();
        for r in &running {
            let role = format!("{:?}", r.role).to_lowercase();
            print_json(&json!({ "event": "listening", "role": role, "addr": r.addr.to_string() }))?;
            addrs.insert(role, r.addr.to_string());
        }
        std::io::stdout().flush().ok();
        run.lap("startup");
        run.manifest.summary = json!({ "listening": addrs });
        if let Some(p) = &manifest {
            let text = serde_json::to_string_pretty(&run.manifest).map_err(|e| Error::format("manifest", e))?;
            std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
        }
        tokio::signal::ctrl_c()
            .await
            .map_err(|e| Error::Precondition(format!("signal handler: {e}")))?;
        for r in running {
            r.handle.abort();
        }
        Ok(())
    })
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    let (j, m) = (cli.json, cli.manifest);
    match &cli.command {
        Command::Ingest(a) => ingest(a, j, m),
        Command::Clean(a) => clean(a, j, m),
        Command::Pairs(a) => pairs(a, j, m),
        Command::Train(a) => train(a, j, m),
        Command::Eval(a) => eval(a, j, m),
        Command::Importance(a) => importance(a, j, m),
        Command::Serve(a) => serve_cmd(a, m),
        Command::Predict(a) => predict(a, m),
        Command::Synth(a) => synth(a, j, m),
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn error_line(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Parses `args`, runs the command and returns the process exit code. Errors
/// go to stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line("validation", first));
            return 2;
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let kind = e.kind();
            eprintln!("{}", error_line(kind.as_str(), &e.to_string()));
            kind.exit_code()
        }
    }
}
