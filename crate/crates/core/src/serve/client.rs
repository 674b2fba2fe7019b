use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EmbedRequest, EmbedResponse, PredictRequest, PredictResponse};
use crate::embedding::DocEmbedding;
use crate::error::{Error, Result};
use crate::features::SchemaHash;

/// Texts in one embed request.
const EMBED_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub model_version: String,
}

/// Source of document embeddings, local or remote.
#[async_trait]
pub trait Embedder: Send + Sync {
    async fn embed(&self, texts: &[String]) -> Result<Vec<DocEmbedding>>;
}

/// Source of duplicate probabilities, local or remote.
#[async_trait]
pub trait Predictor: Send + Sync {
    /// All rows are scored by one model version.
    async fn predict(&self, rows: Vec<Vec<f64>>, schema: SchemaHash) -> Result<Prediction>;
}

fn http_client(timeout_secs: u64) -> Result<reqwest::Client> {
    reqwest::Client::builder()
        .timeout(Duration::from_secs(timeout_secs.max(1)))
        .build()
        .map_err(|e| Error::Downstream {
            service: "http".into(),
            message: e.to_string(),
        })
}

async fn post_json<Req: Serialize + Sync, Resp: DeserializeOwned>(
    client: &reqwest::Client,
    service: &str,
    url: &str,
    body: &Req,
) -> Result<Resp> {
    let down = |message: String| Error::Downstream {
        service: service.to_owned(),
        message,
    };
    let resp = client.post(url).json(body).send().await.map_err(|e| down(e.to_string()))?;
    let status = resp.status();
    if status.is_success() {
        return resp.json().await.map_err(|e| down(format!("bad response body: {e}")));
    }
    let text = resp.text().await.unwrap_or_default();
    if status == StatusCode::UNPROCESSABLE_ENTITY {
        // pass schema mismatches through so callers can report both hashes
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
            let e = &v["error"];
            if let (Some(expected), Some(found)) = (e["expected"].as_str(), e["found"].as_str()) {
                return Err(Error::SchemaMismatch {
                    expected: expected.to_owned(),
                    found: found.to_owned(),
                });
            }
        }
    }
    Err(down(format!("{status}: {text}")))
}

pub struct HttpEmbedder {
    client: reqwest::Client,
    url: String,
}

impl HttpEmbedder {
    pub fn new(base_url: impl AsRef<str>, timeout_secs: u64) -> Result<Self> {
        Ok(HttpEmbedder {
            client: http_client(timeout_secs)?,
            url: format!("{}/api/v1/embed", base_url.as_ref().trim_end_matches('/')),
        })
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<DocEmbedding>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            let req = EmbedRequest { texts: chunk.to_vec() };
            let resp: EmbedResponse = post_json(&self.client, "embedding", &self.url, &req).await?;
            if resp.vectors.len() != chunk.len() || resp.hits.len() != chunk.len() {
                return Err(Error::Downstream {
                    service: "embedding".into(),
                    message: format!("{} texts sent, {} vectors returned", chunk.len(), resp.vectors.len()),
                });
            }
            out.extend(
                resp.vectors
                    .into_iter()
                    .zip(resp.hits)
                    .map(|(vector, n_tokens_hit)| DocEmbedding { vector, n_tokens_hit }),
            );
        }
        Ok(out)
    }
}

pub struct HttpPredictor {
    client: reqwest::Client,
    url: String,
}

impl HttpPredictor {
    pub fn new(base_url: impl AsRef<str>, timeout_secs: u64) -> Result<Self> {
        Ok(HttpPredictor {
            client: http_client(timeout_secs)?,
            url: format!("{}/api/v1/predict", base_url.as_ref().trim_end_matches('/')),
        })
    }
}

#[async_trait]
impl Predictor for HttpPredictor {
    async fn predict(&self, rows: Vec<Vec<f64>>, schema: SchemaHash) -> Result<Prediction> {
        let n = rows.len();
        let req = PredictRequest {
            rows,
            schema_hash: Some(schema),
        };
        let resp: PredictResponse = post_json(&self.client, "model", &self.url, &req).await?;
        if resp.probs.len() != n {
            return Err(Error::Downstream {
                service: "model".into(),
                message: format!("{n} rows sent, {} probabilities returned", resp.probs.len()),
            });
        }
        Ok(Prediction {
            probs: resp.probs,
            model_version: resp.model_version,
        })
    }
}
