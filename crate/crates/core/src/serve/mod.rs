//! HTTP serving: an embedding server, a model server and an app server that
//! featurizes new reports against the corpus and records triage decisions.

mod app;
mod client;
mod config;
mod embed;
mod model;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::features::SchemaHash;

pub use app::{AppService, CheckRequest, CheckResponse, Decision, DecisionAction};
pub use client::{Embedder, HttpEmbedder, HttpPredictor, Prediction, Predictor};
pub use config::{ServeConfig, ENV_PREFIX};
pub use embed::EmbedService;
pub use model::ModelService;

/// Request body limit; a predict batch for a large cell runs to megabytes.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

pub const PKG_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub hits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub rows: Vec<Vec<f64>>,
    /// Schema the rows were built under; checked against the model when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_hash: Option<SchemaHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probs: Vec<f64>,
    pub model_version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReloadRequest {
    /// Defaults to the path the current model came from.
    #[serde(default)]
    pub path: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub model_version: String,
    pub previous_version: String,
}

/// Error body: `{"error": {"kind", "message", "fields"?, ...}}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub fields: Vec<String>,
    pub extra: Option<serde_json::Value>,
    pub retry_after: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            fields: Vec::new(),
            extra: None,
            retry_after: None,
        }
    }

    pub fn bad_request(message: impl Into<String>, fields: Vec<String>) -> Self {
        ApiError {
            fields,
            ..ApiError::new(StatusCode::BAD_REQUEST, "validation", message)
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message)
    }

    pub fn unavailable(message: impl Into<String>, retry_after: u64) -> Self {
        ApiError {
            retry_after: Some(retry_after),
            ..ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "downstream", message)
        }
    }

    /// Maps a library error; downstream failures suggest retrying after
    /// `retry_after` seconds.
    pub fn from_error(e: Error, retry_after: u64) -> Self {
        match e {
            Error::Downstream { .. } | Error::Network { .. } => ApiError::unavailable(e.to_string(), retry_after),
            Error::SchemaMismatch { expected, found } => ApiError {
                extra: Some(json!({ "expected": expected, "found": found })),
                ..ApiError::unprocessable(format!("feature schema mismatch: model {expected}, rows {found}"))
            },
            Error::DimensionMismatch { .. } => ApiError::unprocessable(e.to_string()),
            Error::UnknownId(_) => ApiError::not_found(e.to_string()),
            Error::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
            _ => ApiError::bad_request(e.to_string(), Vec::new()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text(), Vec::new())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "kind": self.kind, "message": self.message });
        if !self.fields.is_empty() {
            body["fields"] = json!(self.fields);
        }
        if let Some(serde_json::Value::Object(extra)) = self.extra {
            for (k, v) in extra {
                body[k] = v;
            }
        }
        let mut resp = (self.status, axum::Json(json!({ "error": body }))).into_response();
        if let Some(secs) = self.retry_after {
            resp.headers_mut().insert(header::RETRY_AFTER, secs.into());
        }
        resp
    }
}

/// Which servers a process runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    App,
    Model,
    Embed,
    All,
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "app" => Ok(Role::App),
            "model" => Ok(Role::Model),
            "embed" => Ok(Role::Embed),
            "all" => Ok(Role::All),
            _ => Err(Error::Precondition(format!("unknown role {s:?}, expected app|model|embed|all"))),
        }
    }
}

/// Binds `addr` and serves `router` in the background until the returned
/// handle is aborted.
pub async fn spawn_router(router: Router, addr: SocketAddr) -> crate::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok((local, handle))
}

/// A server that is up, with its bound address.
pub struct Running {
    pub role: Role,
    pub addr: SocketAddr,
    pub handle: tokio::task::JoinHandle<()>,
}

fn socket(cfg: &ServeConfig, port: u16) -> crate::Result<SocketAddr> {
    format!("{}:{}", cfg.host, port)
        .parse()
        .map_err(|e| Error::format("serve config", format!("bad listen address {}:{port}: {e}", cfg.host)))
}

/// Starts the servers for `role`. With `Role::All` the app server talks to
/// the other two in-process; otherwise it uses their HTTP endpoints.
pub async fn start(role: Role, cfg: &ServeConfig) -> crate::Result<Vec<Running>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut embed_svc = None;
    let mut model_svc = None;
    if matches!(role, Role::Embed | Role::All) {
        let svc = Arc::new(EmbedService::from_config(cfg)?);
        let (addr, handle) = spawn_router(embed::router(svc.clone()), socket(cfg, cfg.embed_port)?).await?;
        out.push(Running { role: Role::Embed, addr, handle });
        embed_svc = Some(svc);
    }
    if matches!(role, Role::Model | Role::All) {
        let svc = Arc::new(ModelService::from_config(cfg)?);
        let (addr, handle) = spawn_router(model::router(svc.clone()), socket(cfg, cfg.model_port)?).await?;
        out.push(Running { role: Role::Model, addr, handle });
        model_svc = Some(svc);
    }
    if matches!(role, Role::App | Role::All) {
        let embedder: Arc<dyn Embedder> = match embed_svc {
            Some(s) => s,
            None => Arc::new(HttpEmbedder::new(cfg.embed_base_url(), cfg.request_timeout_secs)?),
        };
        let predictor: Arc<dyn Predictor> = match model_svc {
            Some(s) => s,
            None => Arc::new(HttpPredictor::new(cfg.model_base_url(), cfg.request_timeout_secs)?),
        };
        let svc = Arc::new(AppService::from_config(cfg, embedder, predictor).await?);
        let (addr, handle) = spawn_router(app::router(svc), socket(cfg, cfg.app_port)?).await?;
        out.push(Running { role: Role::App, addr, handle });
    }
    Ok(out)
}

pub use app::router as app_router;
pub use embed::router as embed_router;
pub use model::router as model_router;
