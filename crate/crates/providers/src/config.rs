use std::path::Path;

use clsd_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Embedding,
    Chat,
    Translation,
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProviderKind::Embedding => "embedding",
            ProviderKind::Chat => "chat",
            ProviderKind::Translation => "translation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total tries, including the first one.
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_backoff_ms: 250,
        }
    }
}

/// Where and how to reach one backend.
///
/// `endpoint` is usually an `http://` or `https://` URL. A few offline
/// schemes select built-in backends instead:
///
/// | endpoint          | kind        | backend                              |
/// |-------------------|-------------|--------------------------------------|
/// | `lexical:<dim>`   | embedding   | hashed character 3-grams             |
/// | `replay:<file>`   | chat        | scripted responses from a JSON file  |
/// | `identity:`       | translation | returns its input                    |
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Recorded in reports and cache keys; defaults to `http`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
}

fn default_max_batch() -> usize {
    32
}

fn default_max_inflight() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint<'a> {
    Http(&'a str),
    Lexical(usize),
    Replay(&'a str),
    Identity,
}

impl ProviderConfig {
    pub fn new(
        kind: ProviderKind,
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Self {
        ProviderConfig {
            kind,
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_key_env: None,
            max_batch: default_max_batch(),
            max_inflight: default_max_inflight(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout_ms(),
            backend_id: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::InvalidInput(format!(
                "{} provider: {msg}",
                self.kind
            )))
        };
        if self.max_batch < 1 {
            return bad("max_batch must be >= 1".into());
        }
        if self.max_inflight < 1 {
            return bad("max_inflight must be >= 1".into());
        }
        if self.retry.attempts < 1 {
            return bad("retry.attempts must be >= 1".into());
        }
        if self.model_id.is_empty() {
            return bad("model_id is empty".into());
        }
        if let Some(var) = &self.api_key_env {
            if var.is_empty() || var.contains('=') {
                return bad(format!("api_key_env {var:?} is not a variable name"));
            }
        }
        let endpoint = self.parsed_endpoint()?;
        let fits = match endpoint {
            Endpoint::Http(_) => true,
            Endpoint::Lexical(_) => self.kind == ProviderKind::Embedding,
            Endpoint::Replay(_) => self.kind == ProviderKind::Chat,
            Endpoint::Identity => self.kind == ProviderKind::Translation,
        };
        if !fits {
            return bad(format!(
                "endpoint {} does not serve this kind",
                self.endpoint
            ));
        }
        Ok(())
    }

    pub fn parsed_endpoint(&self) -> Result<Endpoint<'_>> {
        let e = self.endpoint.as_str();
        if e.starts_with("http://") || e.starts_with("https://") {
            return Ok(Endpoint::Http(e));
        }
        if let Some(dim) = e.strip_prefix("lexical:") {
            return dim.parse().map(Endpoint::Lexical).map_err(|_| {
                Error::InvalidInput(format!("bad lexical dimension in endpoint {e:?}"))
            });
        }
        if let Some(path) = e.strip_prefix("replay:") {
            if path.is_empty() {
                return Err(Error::InvalidInput("replay endpoint needs a file".into()));
            }
            return Ok(Endpoint::Replay(path));
        }
        if e == "identity:" {
            return Ok(Endpoint::Identity);
        }
        Err(Error::InvalidInput(format!("unsupported endpoint {e:?}")))
    }

    /// Rewrites a relative `replay:` path against `base`, typically the
    /// directory of the config file it came from.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        if let Some(path) = self.endpoint.strip_prefix("replay:") {
            if Path::new(path).is_relative() {
                self.endpoint = format!("replay:{}", base.join(path).display());
            }
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend_id.as_deref().unwrap_or("http")
    }

    /// Reads the key named by `api_key_env`; `Ok(None)` when none is configured.
    pub fn api_key(&self) -> Result<Option<String>> {
        let Some(var) = &self.api_key_env else {
            return Ok(None);
        };
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => Ok(Some(key)),
            _ => Err(Error::InvalidInput(format!(
                "environment variable {var} (api_key_env of the {} provider) is not set",
                self.kind
            ))),
        }
    }

    pub(crate) fn expect_kind(&self, kind: ProviderKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidInput(format!(
                "expected a {kind} provider, got {}",
                self.kind
            )));
        }
        self.validate()
    }
}
