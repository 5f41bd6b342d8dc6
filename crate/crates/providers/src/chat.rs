use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use clsd_core::generator::{ChatClient, ChatMessage, ChatParams, Role};
use clsd_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Endpoint, ProviderConfig, ProviderKind};
use crate::http::Transport;

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completions client; returns `choices[0].message.content` verbatim.
pub struct HttpChat {
    cfg: ProviderConfig,
    transport: Transport,
}

impl HttpChat {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.expect_kind(ProviderKind::Chat)?;
        let Endpoint::Http(url) = cfg.parsed_endpoint()? else {
            return Err(Error::InvalidInput(format!(
                "{} is not an HTTP endpoint",
                cfg.endpoint
            )));
        };
        let transport = Transport::new(&cfg, url)?;
        Ok(HttpChat { cfg, transport })
    }
}

impl ChatClient for HttpChat {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn max_inflight(&self) -> usize {
        self.cfg.max_inflight
    }

    fn complete(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String> {
        if messages.is_empty() {
            return Err(Error::InvalidInput("chat request has no messages".into()));
        }
        params.check()?;
        let resp: ChatResponse = self.transport.post(&ChatRequest {
            model: &self.cfg.model_id,
            messages,
            temperature: params.temperature,
            top_p: params.top_p,
        })?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(Error::Provider("empty completion".into()));
        }
        Ok(content)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptEntry {
    /// Content of the last user message this entry answers.
    prompt: String,
    /// Returned on successive calls; the last one repeats.
    responses: Vec<String>,
}

/// Offline chat backend answering from a script file.
///
/// The file is a JSON array of `{"prompt": ..., "responses": [...]}`. A call is
/// matched on the content of its last user message; the n-th call for a
/// prompt gets the n-th response, and the final response repeats once the
/// list runs out. Unknown prompts fail as provider errors.
pub struct ReplayChat {
    model_id: String,
    max_inflight: usize,
    script: HashMap<String, Vec<String>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl ReplayChat {
    pub fn from_file(path: impl AsRef<Path>, model_id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut script = HashMap::new();
        for entry in entries {
            if entry.responses.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "{}: script entry has no responses",
                    path.display()
                )));
            }
            if script.insert(entry.prompt, entry.responses).is_some() {
                return Err(Error::InvalidInput(format!(
                    "{}: duplicate prompt in script",
                    path.display()
                )));
            }
        }
        Ok(ReplayChat {
            model_id: model_id.into(),
            max_inflight: 1,
            script,
            calls: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_max_inflight(mut self, n: usize) -> Self {
        self.max_inflight = n.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl ChatClient for ReplayChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_inflight(&self) -> usize {
        self.max_inflight
    }

    fn complete(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String> {
        params.check()?;
        let prompt = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| Error::InvalidInput("chat request has no user message".into()))?;
        let responses = self.script.get(&prompt.content).ok_or_else(|| {
            Error::Provider(format!(
                "no scripted response for prompt ending {:?}",
                tail(&prompt.content)
            ))
        })?;
        let n = {
            let mut calls = self.calls.lock().expect("replay lock poisoned");
            let n = calls.entry(prompt.content.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        let reply = &responses[n.min(responses.len() - 1)];
        if reply.trim().is_empty() {
            return Err(Error::Provider("empty completion".into()));
        }
        Ok(reply.clone())
    }
}

fn tail(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    chars[chars.len().saturating_sub(60)..].iter().collect()
}
