use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use async_trait::async_trait;
use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::client::{Prediction, Predictor};
use super::{ApiError, PredictRequest, PredictResponse, ReloadRequest, ReloadResponse, ServeConfig, BODY_LIMIT, PKG_VERSION};
use crate::error::{Error, Result};
use crate::features::SchemaHash;
use crate::gbdt::{load_model, GbdtModel};

/// A loaded model and the version string it is served under.
pub struct Served {
    pub model: GbdtModel,
    /// Model version plus `#<load generation>`, so every reload is visible.
    pub version: String,
}

/// Holds the current model behind an atomically swapped snapshot.
pub struct ModelService {
    current: RwLock<Arc<Served>>,
    generation: AtomicU64,
    path: Mutex<Option<PathBuf>>,
    reload_lock: tokio::sync::Mutex<()>,
}

impl ModelService {
    pub fn new(model: GbdtModel, path: Option<PathBuf>) -> Self {
        ModelService {
            current: RwLock::new(Arc::new(Served {
                version: format!("{}#1", model.version),
                model,
            })),
            generation: AtomicU64::new(1),
            path: Mutex::new(path),
            reload_lock: tokio::sync::Mutex::new(()),
        }
    }

    pub fn from_config(cfg: &ServeConfig) -> Result<Self> {
        let path = cfg
            .model_path
            .clone()
            .ok_or_else(|| Error::Precondition("model server needs model_path".into()))?;
        Ok(ModelService::new(load_model(&path)?, Some(path)))
    }

    pub fn snapshot(&self) -> Arc<Served> {
        self.current.read().expect("model lock").clone()
    }

    pub fn version(&self) -> String {
        self.snapshot().version.clone()
    }

    /// Every row is scored by the same model snapshot.
    pub fn predict_rows(&self, rows: &[Vec<f64>], schema: Option<SchemaHash>) -> Result<Prediction> {
        let served = self.snapshot();
        if let Some(h) = schema {
            served.model.check_schema(h)?;
        }
        let width = served.model.feature_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                left: width,
                right: bad.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("feature rows contain non-finite values".into()));
        }
        Ok(Prediction {
            probs: rows.iter().map(|r| served.model.predict_row(r)).collect(),
            model_version: served.version.clone(),
        })
    }

    /// Loads `path` (or the previous path) and swaps it in. On any error the
    /// current model stays.
    pub async fn reload(&self, path: Option<&Path>) -> Result<ReloadResponse> {
        let _guard = self.reload_lock.lock().await;
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => self
                .path
                .lock()
                .expect("path lock")
                .clone()
                .ok_or_else(|| Error::Precondition("no model path to reload from".into()))?,
        };
        let p = path.clone();
        let model = tokio::task::spawn_blocking(move || load_model(&p))
            .await
            .map_err(|e| Error::Precondition(format!("reload task failed: {e}")))??;
        let generation = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        let served = Arc::new(Served {
            version: format!("{}#{generation}", model.version),
            model,
        });
        let new_version = served.version.clone();
        let previous = std::mem::replace(&mut *self.current.write().expect("model lock"), served);
        *self.path.lock().expect("path lock") = Some(path);
        tracing::info!(from = %previous.version, to = %new_version, "model reloaded");
        Ok(ReloadResponse {
            model_version: new_version,
            previous_version: previous.version.clone(),
        })
    }

    pub fn health(&self) -> serde_json::Value {
        let s = self.snapshot();
        json!({
            "status": "ok",
            "component": "model",
            "version": PKG_VERSION,
            "model_version": s.version,
            "schema_hash": s.model.schema_hash,
            "n_trees": s.model.trees.len(),
        })
    }
}

#[async_trait]
impl Predictor for ModelService {
    async fn predict(&self, rows: Vec<Vec<f64>>, schema: SchemaHash) -> Result<Prediction> {
        self.predict_rows(&rows, Some(schema))
    }
}

type JsonBody<T> = std::result::Result<Json<T>, axum::extract::rejection::JsonRejection>;

async fn predict_handler(
    State(svc): State<Arc<ModelService>>,
    body: JsonBody<PredictRequest>,
) -> std::result::Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body?;
    let s = svc.clone();
    let p = tokio::task::spawn_blocking(move || s.predict_rows(&req.rows, req.schema_hash))
        .await
        .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match e {
            Error::Precondition(m) => ApiError::bad_request(m, vec!["rows".into()]),
            e => ApiError::from_error(e, 5),
        })?;
    Ok(Json(PredictResponse {
        probs: p.probs,
        model_version: p.model_version,
    }))
}

async fn reload_handler(
    State(svc): State<Arc<ModelService>>,
    body: Option<Json<ReloadRequest>>,
) -> std::result::Result<Json<ReloadResponse>, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    svc.reload(req.path.as_deref()).await.map(Json).map_err(|e| {
        // the old model is still being served
        ApiError::unprocessable(format!("reload rejected: {e}"))
    })
}

async fn health_handler(State(svc): State<Arc<ModelService>>) -> Json<serde_json::Value> {
    Json(svc.health())
}

pub fn router(svc: Arc<ModelService>) -> Router {
    Router::new()
        .route("/api/v1/predict", post(predict_handler))
        .route("/api/v1/reload", post(reload_handler))
        .route("/healthz", get(health_handler))
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(svc)
}
