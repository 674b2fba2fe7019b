//! Paginated ingestion from a Bugzilla-style REST endpoint.

use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::Value;
use tracing::{debug, warn};

use super::{BugReport, Corpus, Severity, SkipReport, Status};
use crate::error::{Error, Result};

/// Parameters for [`ingest_rest`].
#[derive(Debug, Clone)]
pub struct RestIngest {
    /// Search endpoint, e.g. `https://bugzilla.mozilla.org/rest/bug`.
    pub endpoint: String,
    pub query: Vec<(String, String)>,
    pub page_size: usize,
    pub max_bugs: usize,
    /// First offset to request; lets a caller resume after a network error.
    pub start_offset: usize,
    /// Sent as `X-BUGZILLA-API-KEY` when present.
    pub api_key: Option<String>,
    /// Fetch `{endpoint}/{id}/comment` when a record carries no description.
    pub fetch_first_comment: bool,
    pub retries: u32,
}

impl RestIngest {
    pub fn new(endpoint: impl Into<String>, page_size: usize, max_bugs: usize) -> Self {
        RestIngest {
            endpoint: endpoint.into(),
            query: Vec::new(),
            page_size,
            max_bugs,
            start_offset: 0,
            api_key: None,
            fetch_first_comment: false,
            retries: 2,
        }
    }

    pub fn query(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.query.push((key.into(), value.into()));
        self
    }
}

/// Pulls up to `max_bugs` reports, `page_size` at a time, using `limit`/`offset`.
///
/// Records without an `id` are skipped and counted. A transport failure that
/// survives the retries is returned as [`Error::Network`] carrying the offset of
/// the failed page.
pub async fn ingest_rest(client: &reqwest::Client, req: &RestIngest) -> Result<(Corpus, SkipReport)> {
    if req.page_size == 0 {
        return Err(Error::Precondition("page_size must be at least 1".into()));
    }
    if req.max_bugs == 0 {
        return Err(Error::Precondition("max_bugs must be at least 1".into()));
    }

    let mut corpus = Corpus::default();
    let mut skips = SkipReport::default();
    let mut offset = req.start_offset;
    while corpus.len() < req.max_bugs {
        let page = fetch_page(client, req, offset).await?;
        let Some(records) = page.get("bugs").and_then(Value::as_array) else {
            return Err(Error::format(
                format!("page at offset {offset}"),
                "response has no `bugs` array",
            ));
        };
        debug!(offset, n = records.len(), "fetched page");
        for record in records {
            if corpus.len() >= req.max_bugs {
                break;
            }
            match map_remote_record(record) {
                Ok(mut bug) => {
                    if bug.description.is_empty() && req.fetch_first_comment {
                        bug.description = fetch_first_comment(client, req, &bug.id, offset).await?;
                    }
                    if corpus.contains(&bug.id) {
                        skips.record(format!("offset {offset}: repeated id {}", bug.id));
                        continue;
                    }
                    corpus.push(bug)?;
                }
                Err(reason) => skips.record(format!("offset {offset}: {reason}")),
            }
        }
        if records.len() < req.page_size {
            break;
        }
        offset += records.len();
    }
    Ok((corpus, skips))
}

async fn get_json(client: &reqwest::Client, req: &RestIngest, url: &str, params: &[(String, String)], offset: usize) -> Result<Value> {
    let mut attempt = 0;
    loop {
        let mut builder = client.get(url).query(params);
        if let Some(key) = &req.api_key {
            builder = builder.header("X-BUGZILLA-API-KEY", key);
        }
        let outcome = match builder.send().await {
            Ok(resp) => match resp.error_for_status() {
                Ok(resp) => resp.json::<Value>().await.map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            },
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(v) => return Ok(v),
            Err(message) if attempt >= req.retries => {
                return Err(Error::Network { offset, message });
            }
            Err(message) => {
                warn!(offset, attempt, %message, "request failed, retrying");
                attempt += 1;
                tokio::time::sleep(Duration::from_millis(200 * u64::from(attempt))).await;
            }
        }
    }
}

async fn fetch_page(client: &reqwest::Client, req: &RestIngest, offset: usize) -> Result<Value> {
    let mut params = req.query.clone();
    params.push(("limit".into(), req.page_size.to_string()));
    params.push(("offset".into(), offset.to_string()));
    get_json(client, req, &req.endpoint, &params, offset).await
}

async fn fetch_first_comment(client: &reqwest::Client, req: &RestIngest, id: &str, offset: usize) -> Result<String> {
    let url = format!("{}/{}/comment", req.endpoint.trim_end_matches('/'), id);
    let v = get_json(client, req, &url, &[], offset).await?;
    Ok(v.pointer(&format!("/bugs/{id}/comments/0/text"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned())
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn str_field(record: &Value, keys: &[&str]) -> String {
    keys.iter()
        .find_map(|k| record.get(*k).and_then(Value::as_str))
        .unwrap_or_default()
        .to_owned()
}

fn map_status(raw: &str) -> Status {
    match raw.to_ascii_lowercase().as_str() {
        "assigned" | "in_progress" => Status::Assigned,
        "resolved" | "verified" | "duplicate" => Status::Resolved,
        "closed" => Status::Closed,
        _ => Status::New,
    }
}

/// Maps one remote record onto [`BugReport`].
///
/// `summary` becomes the headline; the description comes from `description` or
/// the first entry of `comments`; `dupe_of` becomes `duplicate_of` and forces the
/// duplicate status. Returns the skip reason when the record has no usable id.
pub fn map_remote_record(record: &Value) -> std::result::Result<BugReport, String> {
    let id = record.get("id").and_then(id_string).ok_or("record has no id")?;

    let description = record
        .get("description")
        .and_then(Value::as_str)
        .or_else(|| record.pointer("/comments/0/text").and_then(Value::as_str))
        .unwrap_or_default()
        .to_owned();

    let duplicate_of = record
        .get("dupe_of")
        .and_then(id_string)
        .filter(|target| *target != id);
    let status = if duplicate_of.is_some() {
        Status::Duplicate
    } else {
        map_status(&str_field(record, &["status"]))
    };

    let created_at = ["creation_time", "created_at"]
        .iter()
        .find_map(|k| record.get(*k).and_then(Value::as_str))
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map_or(DateTime::UNIX_EPOCH, |t| t.with_timezone(&Utc));

    Ok(BugReport {
        id,
        headline: str_field(record, &["summary", "headline"]),
        description,
        project: str_field(record, &["project", "classification"]),
        product: str_field(record, &["product"]),
        component: str_field(record, &["component"]),
        version: str_field(record, &["version"]),
        hardware: str_field(record, &["hardware", "platform"]),
        severity: Severity::parse_lenient(&str_field(record, &["severity"])),
        status,
        duplicate_of,
        created_at,
    })
}

/// Reads a saved REST response (`{"bugs": [...]}`) from disk.
pub fn parse_remote_dump(path: &Path) -> Result<(Corpus, SkipReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))?;
    let records = v
        .get("bugs")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format(path.display().to_string(), "no `bugs` array"))?;
    let mut corpus = Corpus::default();
    let mut skips = SkipReport::default();
    for (i, record) in records.iter().enumerate() {
        match map_remote_record(record) {
            Ok(bug) if corpus.contains(&bug.id) => {
                skips.record(format!("record {i}: repeated id {}", bug.id));
            }
            Ok(bug) => corpus.push(bug)?,
            Err(reason) => skips.record(format!("record {i}: {reason}")),
        }
    }
    Ok((corpus, skips))
}
