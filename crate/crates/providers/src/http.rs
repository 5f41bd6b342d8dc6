//! Blocking JSON-over-HTTP transport with retries, plus the bounded fan-out
//! shared by the batch clients.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use clsd_core::{Error, Result};
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::{debug, warn};

use crate::config::{ProviderConfig, RetryPolicy};

const MAX_BACKOFF_EXPONENT: u32 = 10;

pub(crate) struct Transport {
    client: Client,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl Transport {
    pub(crate) fn new(cfg: &ProviderConfig, url: &str) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Provider(format!("cannot build HTTP client: {e}")))?;
        Ok(Transport {
            client,
            url: url.to_string(),
            api_key: cfg.api_key()?,
            retry: cfg.retry,
        })
    }

    /// POSTs `body` and decodes the reply. Transport errors, 429 and 5xx are
    /// retried up to the configured attempts; other failures return at once.
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts {
            if attempt > 1 {
                let pause = backoff(&self.retry, attempt - 1);
                debug!(url = %self.url, attempt, ?pause, "retrying");
                std::thread::sleep(pause);
            }
            match self.send_once(body) {
                Ok(value) => return Ok(value),
                Err(Failure::Fatal(msg)) => {
                    return Err(Error::Provider(format!("POST {}: {msg}", self.url)))
                }
                Err(Failure::Retryable(msg)) => {
                    warn!(url = %self.url, attempt, error = %msg, "request failed");
                    last = msg;
                }
            }
        }
        Err(Error::Provider(format!(
            "POST {} failed after {} attempts: {last}",
            self.url, self.retry.attempts
        )))
    }

    fn send_once<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, Failure> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Retryable(format!(
                "HTTP {status}: {}",
                excerpt(&text)
            )));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {}", excerpt(&text))));
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(format!("response is not JSON: {e}")))?;
        if let Some(err) = value.get("error").filter(|e| !e.is_null()) {
            let msg = err
                .get("message")
                .and_then(|m| m.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| err.to_string());
            return Err(Failure::Fatal(format!("backend error: {msg}")));
        }
        serde_json::from_value(value)
            .map_err(|e| Failure::Fatal(format!("unexpected response shape: {e}")))
    }
}

/// Exponential backoff for the `retry`-th retry with up to 50% added jitter.
pub(crate) fn backoff(policy: &RetryPolicy, retry: u32) -> Duration {
    let exp = (retry.saturating_sub(1)).min(MAX_BACKOFF_EXPONENT);
    let base = policy.base_backoff_ms.saturating_mul(1 << exp);
    let jitter = if base > 1 {
        rand::rng().random_range(0..=base / 2)
    } else {
        0
    };
    Duration::from_millis(base + jitter)
}

fn excerpt(body: &str) -> &str {
    let end = body.char_indices().nth(200).map_or(body.len(), |(i, _)| i);
    body[..end].trim()
}

/// Applies `f` to every item on up to `max_inflight` threads and returns the
/// outputs in item order. Stops handing out work after the first error and
/// reports the earliest failing item.
pub(crate) fn run_bounded<T, R, F>(items: &[T], max_inflight: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = max_inflight.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R>>>> =
        Mutex::new(std::iter::repeat_with(|| None).take(items.len()).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let out = f(item);
                if out.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    let slots = slots.into_inner().expect("worker panicked");
    let mut results = Vec::with_capacity(items.len());
    for slot in slots {
        match slot {
            Some(Ok(r)) => results.push(r),
            Some(Err(e)) => return Err(e),
            // only reachable after an earlier error stopped the workers
            None => break,
        }
    }
    if results.len() == items.len() {
        Ok(results)
    } else {
        Err(Error::Provider("batch aborted".into()))
    }
}
