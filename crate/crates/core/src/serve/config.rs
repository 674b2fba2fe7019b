use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings shared by the three servers. Loaded from a TOML file, then
/// overridden by `BUGDEDUP_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub app_port: u16,
    pub model_port: u16,
    pub embed_port: u16,
    /// Where the app server reaches the other two. Defaults to host:port.
    pub model_url: Option<String>,
    pub embed_url: Option<String>,
    pub corpus_path: Option<PathBuf>,
    /// Decided bugs are appended here and replayed on startup.
    pub decisions_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub vectors_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub synonyms_path: Option<PathBuf>,
    pub pos_lexicon_path: Option<PathBuf>,
    pub top_k: usize,
    pub cache_ttl_secs: u64,
    /// Seconds suggested in `Retry-After` when a downstream server fails.
    pub retry_after_secs: u64,
    pub request_timeout_secs: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            app_port: 8080,
            model_port: 8081,
            embed_port: 8082,
            model_url: None,
            embed_url: None,
            corpus_path: None,
            decisions_path: None,
            model_path: None,
            vectors_path: None,
            stopwords_path: None,
            synonyms_path: None,
            pos_lexicon_path: None,
            top_k: 10,
            cache_ttl_secs: 15 * 60,
            retry_after_secs: 5,
            request_timeout_secs: 30,
        }
    }
}

pub const ENV_PREFIX: &str = "BUGDEDUP_";

impl ServeConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("serve config", e))
    }

    /// File (if any) plus process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => ServeConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `BUGDEDUP_<FIELD>` overrides, e.g. `BUGDEDUP_APP_PORT=9000`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        let var = |name: &str| get(&format!("{ENV_PREFIX}{name}"));
        fn num<T: std::str::FromStr>(name: &str, v: String) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::format("environment", format!("{ENV_PREFIX}{name}={v} is not a valid number")))
        }
        if let Some(v) = var("HOST") {
            self.host = v;
        }
        for (name, slot) in [
            ("APP_PORT", &mut self.app_port),
            ("MODEL_PORT", &mut self.model_port),
            ("EMBED_PORT", &mut self.embed_port),
        ] {
            if let Some(v) = var(name) {
                *slot = num(name, v)?;
            }
        }
        for (name, slot) in [("MODEL_URL", &mut self.model_url), ("EMBED_URL", &mut self.embed_url)] {
            if let Some(v) = var(name) {
                *slot = Some(v);
            }
        }
        for (name, slot) in [
            ("CORPUS_PATH", &mut self.corpus_path),
            ("DECISIONS_PATH", &mut self.decisions_path),
            ("MODEL_PATH", &mut self.model_path),
            ("VECTORS_PATH", &mut self.vectors_path),
            ("STOPWORDS_PATH", &mut self.stopwords_path),
            ("SYNONYMS_PATH", &mut self.synonyms_path),
            ("POS_LEXICON_PATH", &mut self.pos_lexicon_path),
        ] {
            if let Some(v) = var(name) {
                *slot = Some(PathBuf::from(v));
            }
        }
        if let Some(v) = var("TOP_K") {
            self.top_k = num("TOP_K", v)?;
        }
        for (name, slot) in [
            ("CACHE_TTL_SECS", &mut self.cache_ttl_secs),
            ("RETRY_AFTER_SECS", &mut self.retry_after_secs),
            ("REQUEST_TIMEOUT_SECS", &mut self.request_timeout_secs),
        ] {
            if let Some(v) = var(name) {
                *slot = num(name, v)?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Precondition("top_k must be at least 1".into()));
        }
        if self.cache_ttl_secs == 0 {
            return Err(Error::Precondition("cache_ttl_secs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_base_url(&self) -> String {
        self.model_url
            .clone()
            .unwrap_or_else(|| format!("http://{}:{}", self.host, self.model_port))
    }

    pub fn embed_base_url(&self) -> String {
        self.embed_url
            .clone()
            .unwrap_or_else(|| format!("http://{}:{}", self.host, self.embed_port))
    }
}
