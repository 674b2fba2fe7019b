use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::client::{Embedder, Predictor};
use super::{ApiError, ServeConfig, BODY_LIMIT, PKG_VERSION};
use crate::corpus::{load_jsonl, BugReport, Corpus, Status};
use crate::error::{Error, Result};
use crate::eval::{sort_ranked, RankedCandidate};
use crate::features::{Featurizer, PosTagger, TextProfile};
use crate::pairs::candidate_set;
use crate::preprocess::CleanConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckRequest {
    pub headline: String,
    pub description: String,
    pub project: String,
    pub product: String,
    pub component: String,
}

impl CheckRequest {
    /// Names of the fields that make the request invalid.
    pub fn invalid_fields(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.headline.trim().is_empty() && self.description.trim().is_empty() {
            bad.extend(["headline".to_owned(), "description".to_owned()]);
        }
        if self.product.trim().is_empty() {
            bad.push("product".into());
        }
        if self.component.trim().is_empty() {
            bad.push("component".into());
        }
        bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResponse {
    pub candidates: Vec<RankedCandidate>,
    pub model_version: String,
    pub request_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    CreateNew,
    DuplicateOf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: String,
    pub action: DecisionAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

struct Pending {
    bug: BugReport,
    profile: Arc<TextProfile>,
    at: Instant,
}

#[derive(Default)]
struct Store {
    corpus: Corpus,
    profiles: HashMap<String, Arc<TextProfile>>,
    next_local: u64,
}

impl Store {
    fn insert(&mut self, bug: BugReport, profile: Arc<TextProfile>) -> Result<()> {
        let id = bug.id.clone();
        self.corpus.push(bug)?;
        self.profiles.insert(id, profile);
        Ok(())
    }

    fn fresh_id(&mut self) -> String {
        loop {
            self.next_local += 1;
            let id = format!("LOCAL-{:06}", self.next_local);
            if !self.corpus.contains(&id) {
                return id;
            }
        }
    }
}

/// Front-end facing service. Owns the corpus and featurization; embeddings
/// and probabilities come from the other two servers.
pub struct AppService {
    featurizer: Arc<Featurizer>,
    embedder: Arc<dyn Embedder>,
    predictor: Arc<dyn Predictor>,
    store: RwLock<Store>,
    pending: Mutex<HashMap<String, Pending>>,
    decide_lock: tokio::sync::Mutex<()>,
    decisions_path: Option<PathBuf>,
    top_k: usize,
    ttl: Duration,
    retry_after: u64,
}

impl AppService {
    /// Profiles every bug in `corpus`, fetching embeddings from `embedder`.
    pub async fn new(
        corpus: Corpus,
        featurizer: Featurizer,
        embedder: Arc<dyn Embedder>,
        predictor: Arc<dyn Predictor>,
        cfg: &ServeConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let featurizer = Arc::new(featurizer);
        let texts: Vec<String> = corpus.iter().map(BugReport::text).collect();
        let embeddings = embedder.embed(&texts).await?;
        let f = featurizer.clone();
        let profiles: Vec<Arc<TextProfile>> = tokio::task::spawn_blocking(move || {
            texts
                .par_iter()
                .zip(embeddings)
                .map(|(t, e)| Arc::new(f.profile_with_embedding(t, e)))
                .collect()
        })
        .await
        .map_err(|e| Error::Precondition(format!("profiling task failed: {e}")))?;
        let profiles = corpus.iter().map(|b| b.id.clone()).zip(profiles).collect();
        tracing::info!(bugs = corpus.len(), "corpus profiled");
        Ok(AppService {
            featurizer,
            embedder,
            predictor,
            store: RwLock::new(Store {
                corpus,
                profiles,
                next_local: 0,
            }),
            pending: Mutex::new(HashMap::new()),
            decide_lock: tokio::sync::Mutex::new(()),
            decisions_path: cfg.decisions_path.clone(),
            top_k: cfg.top_k,
            ttl: Duration::from_secs(cfg.cache_ttl_secs),
            retry_after: cfg.retry_after_secs,
        })
    }

    /// Corpus from `corpus_path` plus any decisions recorded earlier.
    pub async fn from_config(cfg: &ServeConfig, embedder: Arc<dyn Embedder>, predictor: Arc<dyn Predictor>) -> Result<Self> {
        let mut corpus = match &cfg.corpus_path {
            Some(p) => load_jsonl(p)?.0,
            None => Corpus::default(),
        };
        if let Some(p) = cfg.decisions_path.as_deref().filter(|p| p.exists()) {
            for bug in load_jsonl(p)?.0.into_bugs() {
                if !corpus.contains(&bug.id) {
                    corpus.push(bug)?;
                }
            }
        }
        let clean = CleanConfig::from_files(cfg.stopwords_path.as_deref(), cfg.synonyms_path.as_deref())?;
        let tagger = match &cfg.pos_lexicon_path {
            Some(p) => PosTagger::load(p)?,
            None => PosTagger::default(),
        };
        // the embedding server may still be coming up
        let deadline = Instant::now() + Duration::from_secs(cfg.request_timeout_secs);
        loop {
            match embedder.embed(&[String::new()]).await {
                Ok(_) => break,
                Err(e) if Instant::now() < deadline => {
                    tracing::info!(error = %e, "waiting for embedding server");
                    tokio::time::sleep(Duration::from_millis(250)).await;
                }
                Err(e) => return Err(e),
            }
        }
        AppService::new(corpus, Featurizer::new(clean, tagger), embedder, predictor, cfg).await
    }

    pub fn corpus_len(&self) -> usize {
        self.store.read().expect("store lock").corpus.len()
    }

    pub fn get_bug(&self, id: &str) -> Option<BugReport> {
        self.store.read().expect("store lock").corpus.get(id).cloned()
    }

    fn api(&self, e: Error) -> ApiError {
        ApiError::from_error(e, self.retry_after)
    }

    /// Ranks same-cell candidates for the report. Nothing is stored except
    /// the pending request, which expires after the TTL.
    pub async fn check(&self, req: CheckRequest) -> std::result::Result<CheckResponse, ApiError> {
        let bad = req.invalid_fields();
        if !bad.is_empty() {
            return Err(ApiError::bad_request(format!("invalid fields: {}", bad.join(", ")), bad));
        }
        let mut bug = BugReport::new("", req.headline, req.description, req.product, req.component);
        bug.project = req.project;
        bug.created_at = Utc::now();
        let text = bug.text();
        let embedding = self
            .embedder
            .embed(std::slice::from_ref(&text))
            .await
            .map_err(|e| self.api(e))?
            .pop()
            .ok_or_else(|| self.api(Error::Downstream {
                service: "embedding".into(),
                message: "no vector returned".into(),
            }))?;
        let profile = Arc::new(self.featurizer.profile_with_embedding(&text, embedding));

        let candidates: Vec<(BugReport, Arc<TextProfile>)> = {
            let store = self.store.read().expect("store lock");
            candidate_set(&bug, &store.corpus)
                .into_iter()
                .map(|b| (b.clone(), store.profiles[&b.id].clone()))
                .collect()
        };
        let (f, q) = (self.featurizer.clone(), profile.clone());
        let cands = Arc::new(candidates);
        let c = cands.clone();
        let rows: Vec<Vec<f64>> = tokio::task::spawn_blocking(move || {
            c.par_iter()
                .map(|(_, p)| f.pair(&q, p).map(|x| x.values))
                .collect::<Result<_>>()
        })
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| self.api(e))?;
        let pred = self
            .predictor
            .predict(rows, self.featurizer.schema_hash())
            .await
            .map_err(|e| self.api(e))?;

        let mut ranked: Vec<RankedCandidate> = cands
            .iter()
            .zip(&pred.probs)
            .map(|((b, _), &p)| RankedCandidate {
                bug_id: b.id.clone(),
                probability: p,
                headline: b.headline.clone(),
                created_at: b.created_at,
            })
            .collect();
        sort_ranked(&mut ranked);
        ranked.truncate(self.top_k);

        let request_id = uuid::Uuid::new_v4().to_string();
        {
            let mut pending = self.pending.lock().expect("pending lock");
            let ttl = self.ttl;
            pending.retain(|_, p| p.at.elapsed() < ttl);
            pending.insert(
                request_id.clone(),
                Pending {
                    bug,
                    profile,
                    at: Instant::now(),
                },
            );
        }
        Ok(CheckResponse {
            candidates: ranked,
            model_version: pred.model_version,
            request_id,
        })
    }

    /// Stores the pending report as new or as a duplicate of `target_id`.
    pub async fn decide(&self, d: Decision) -> std::result::Result<BugReport, ApiError> {
        match (d.action, &d.target_id) {
            (DecisionAction::DuplicateOf, None) => {
                return Err(ApiError::bad_request("duplicate_of needs target_id", vec!["target_id".into()]))
            }
            (DecisionAction::CreateNew, Some(_)) => {
                return Err(ApiError::bad_request("create_new takes no target_id", vec!["target_id".into()]))
            }
            _ => {}
        }
        let _one_writer = self.decide_lock.lock().await;
        let pending = {
            let mut map = self.pending.lock().expect("pending lock");
            match map.remove(&d.request_id) {
                Some(p) if p.at.elapsed() < self.ttl => p,
                _ => return Err(ApiError::not_found(format!("request {} is unknown or expired", d.request_id))),
            }
        };
        let mut bug = pending.bug.clone();
        {
            let mut store = self.store.write().expect("store lock");
            if let Some(t) = &d.target_id {
                if !store.corpus.contains(t) {
                    drop(store);
                    // let the caller retry with another target
                    self.pending.lock().expect("pending lock").insert(d.request_id.clone(), pending);
                    return Err(ApiError {
                        fields: vec!["target_id".into()],
                        ..ApiError::unprocessable(format!("target bug {t} does not exist"))
                    });
                }
                bug.status = Status::Duplicate;
                bug.duplicate_of = Some(t.clone());
            }
            bug.id = store.fresh_id();
        }
        if let Some(path) = &self.decisions_path {
            append_jsonl(path, &bug).map_err(|e| self.api(e))?;
        }
        self.store
            .write()
            .expect("store lock")
            .insert(bug.clone(), pending.profile)
            .map_err(|e| self.api(e))?;
        tracing::info!(id = %bug.id, status = %bug.status, "decision stored");
        Ok(bug)
    }

    pub fn health(&self) -> serde_json::Value {
        json!({
            "status": "ok",
            "component": "app",
            "version": PKG_VERSION,
            "schema_hash": self.featurizer.schema_hash(),
            "corpus_size": self.corpus_len(),
            "pending_requests": self.pending.lock().expect("pending lock").len(),
            "top_k": self.top_k,
        })
    }
}

fn append_jsonl(path: &std::path::Path, bug: &BugReport) -> Result<()> {
    let line = serde_json::to_string(bug).map_err(|e| Error::format("decision", e))?;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

type JsonBody<T> = std::result::Result<Json<T>, axum::extract::rejection::JsonRejection>;

async fn check_handler(
    State(svc): State<Arc<AppService>>,
    body: JsonBody<CheckRequest>,
) -> std::result::Result<Json<CheckResponse>, ApiError> {
    let Json(req) = body?;
    svc.check(req).await.map(Json)
}

async fn decision_handler(
    State(svc): State<Arc<AppService>>,
    body: JsonBody<Decision>,
) -> std::result::Result<Json<BugReport>, ApiError> {
    let Json(d) = body?;
    svc.decide(d).await.map(Json)
}

async fn bug_handler(
    State(svc): State<Arc<AppService>>,
    Path(id): Path<String>,
) -> std::result::Result<Json<BugReport>, ApiError> {
    svc.get_bug(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no bug {id}")))
}

async fn health_handler(State(svc): State<Arc<AppService>>) -> Json<serde_json::Value> {
    Json(svc.health())
}

pub fn router(svc: Arc<AppService>) -> Router {
    Router::new()
        .route("/api/v1/check", post(check_handler))
        .route("/api/v1/decision", post(decision_handler))
        .route("/api/v1/bugs/{id}", get(bug_handler))
        .route("/healthz", get(health_handler))
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(svc)
}
