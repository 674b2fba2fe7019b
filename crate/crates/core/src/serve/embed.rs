use std::path::Path;
use std::sync::{Arc, RwLock};

use async_trait::async_trait;
use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use rayon::prelude::*;
use serde_json::json;

use super::client::Embedder;
use super::{ApiError, EmbedRequest, EmbedResponse, ServeConfig, BODY_LIMIT, PKG_VERSION};
use crate::embedding::{embed_document, load_vec_file, DocEmbedding, EmbeddingBackend, WordVectorStore};
use crate::error::{Error, Result};
use crate::preprocess::{normalize, CleanConfig};

/// Normalizes texts and mean-pools their word vectors.
pub struct EmbedService {
    clean: CleanConfig,
    store: RwLock<Option<Arc<WordVectorStore>>>,
    instance: String,
    loads: std::sync::atomic::AtomicU64,
}

impl EmbedService {
    /// A service with no vectors yet; embed requests get 503 until
    /// [`EmbedService::install`] is called.
    pub fn unloaded(clean: CleanConfig) -> Self {
        EmbedService {
            clean,
            store: RwLock::new(None),
            instance: uuid::Uuid::new_v4().to_string(),
            loads: Default::default(),
        }
    }

    pub fn new(clean: CleanConfig, store: WordVectorStore) -> Self {
        let svc = EmbedService::unloaded(clean);
        svc.install(store);
        svc
    }

    pub fn from_config(cfg: &ServeConfig) -> Result<Self> {
        let clean = CleanConfig::from_files(cfg.stopwords_path.as_deref(), cfg.synonyms_path.as_deref())?;
        let path = cfg
            .vectors_path
            .as_deref()
            .ok_or_else(|| Error::Precondition("embedding server needs vectors_path".into()))?;
        let svc = EmbedService::unloaded(clean);
        svc.load(path)?;
        Ok(svc)
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let (store, skipped) = load_vec_file(path)?;
        if skipped.skipped > 0 {
            tracing::warn!(skipped = skipped.skipped, "vector lines skipped");
        }
        tracing::info!(words = store.vocab_size(), dim = store.dim(), "vectors loaded");
        self.install(store);
        Ok(())
    }

    pub fn install(&self, store: WordVectorStore) {
        *self.store.write().expect("store lock") = Some(Arc::new(store));
        self.loads.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    fn snapshot(&self) -> Option<Arc<WordVectorStore>> {
        self.store.read().expect("store lock").clone()
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<DocEmbedding>> {
        let store = self.snapshot().ok_or_else(|| Error::Downstream {
            service: "embedding".into(),
            message: "word vectors not loaded".into(),
        })?;
        Ok(texts
            .par_iter()
            .map(|t| embed_document(&normalize(t, &self.clean).tokens, store.as_ref()))
            .collect())
    }

    pub fn health(&self) -> serde_json::Value {
        let store = self.snapshot();
        json!({
            "status": if store.is_some() { "ok" } else { "loading" },
            "component": "embedding",
            "version": PKG_VERSION,
            "instance": self.instance,
            "store_loads": self.loads.load(std::sync::atomic::Ordering::Relaxed),
            "vocab_size": store.as_ref().map(|s| s.vocab_size()),
            "dim": store.as_ref().map(|s| s.dim()),
        })
    }
}

#[async_trait]
impl Embedder for EmbedService {
    async fn embed(&self, texts: &[String]) -> Result<Vec<DocEmbedding>> {
        self.embed_texts(texts)
    }
}

async fn embed_handler(
    State(svc): State<Arc<EmbedService>>,
    body: std::result::Result<Json<EmbedRequest>, axum::extract::rejection::JsonRejection>,
) -> std::result::Result<Json<EmbedResponse>, ApiError> {
    let Json(req) = body?;
    let s = svc.clone();
    let docs = tokio::task::spawn_blocking(move || s.embed_texts(&req.texts))
        .await
        .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| ApiError::from_error(e, 5))?;
    let hits = docs.iter().map(|d| d.n_tokens_hit).collect();
    let vectors = docs.into_iter().map(|d| d.vector).collect();
    Ok(Json(EmbedResponse { vectors, hits }))
}

async fn health_handler(State(svc): State<Arc<EmbedService>>) -> Json<serde_json::Value> {
    Json(svc.health())
}

pub fn router(svc: Arc<EmbedService>) -> Router {
    Router::new()
        .route("/api/v1/embed", post(embed_handler))
        .route("/healthz", get(health_handler))
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(svc)
}
