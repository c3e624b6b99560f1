//! Chat-completion access to language models: a live HTTP backend and a scripted
//! backend that replays canned responses.

mod http;
mod scripted;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpSettings};
pub use scripted::{load_scenario, ScenarioTask, ScriptRule, ScriptedBackend, ScriptedFailure, ScriptedScenario};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("request {request_id} timed out after {attempts} attempt(s)")]
    Timeout { request_id: String, attempts: u32 },
    #[error("transport error for {request_id} after {attempts} attempt(s): {message}")]
    Transport {
        request_id: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed response for {request_id}: {message}")]
    Protocol { request_id: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no backend configured for `{0}`")]
    UnknownBackend(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, request_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_id: request_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(format!("{}: {m}", self.request_id)));
        if self.request_id.is_empty() {
            return Err(GatewayError::InvalidRequest("empty request_id".into()));
        }
        match self.messages.first() {
            None => return bad("no messages"),
            Some(m) if m.role == Role::Assistant => return bad("first message must be system or user"),
            _ => {}
        }
        if self
            .messages
            .iter()
            .any(|m| m.role != Role::System && m.content.is_empty())
        {
            return bad("empty user or assistant message");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature outside [0, 2]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    /// All message contents joined by newlines.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u32,
    pub completion: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub request_id: String,
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub token_counts: TokenCounts,
}

/// Rough whitespace-delimited token estimate for backends that report no usage.
pub fn estimate_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// How one `backend_ref` is served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Http(HttpSettings),
    Scripted { scenario: PathBuf },
}

/// Backend handles keyed by `backend_ref`.
pub type Backends = BTreeMap<String, Arc<dyn ChatBackend>>;

/// Resolves backend specs to live handles. Scripted scenarios are parsed once; each
/// call to [`BackendPool::instantiate`] gets fresh scripted turn counters so that
/// concurrent tasks do not interfere, while HTTP clients are shared.
pub struct BackendPool {
    shared: BTreeMap<String, Arc<dyn ChatBackend>>,
    scenarios: BTreeMap<String, Arc<ScriptedScenario>>,
}

impl BackendPool {
    pub fn from_specs(specs: &BTreeMap<String, BackendSpec>) -> Result<Self, ScenarioError> {
        let mut shared: BTreeMap<String, Arc<dyn ChatBackend>> = BTreeMap::new();
        let mut scenarios = BTreeMap::new();
        for (name, spec) in specs {
            match spec {
                BackendSpec::Http(settings) => {
                    shared.insert(name.clone(), Arc::new(HttpBackend::from_settings(name, settings)));
                }
                BackendSpec::Scripted { scenario } => {
                    scenarios.insert(name.clone(), Arc::new(load_scenario(scenario)?));
                }
            }
        }
        Ok(Self { shared, scenarios })
    }

    /// Every listed ref is served by the same scenario.
    pub fn all_scripted<'a>(refs: impl IntoIterator<Item = &'a str>, scenario: Arc<ScriptedScenario>) -> Self {
        Self {
            shared: BTreeMap::new(),
            scenarios: refs
                .into_iter()
                .map(|r| (r.to_string(), scenario.clone()))
                .collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.shared
            .keys()
            .chain(self.scenarios.keys())
            .map(String::as_str)
    }

    pub fn instantiate(&self) -> Backends {
        let mut out = self.shared.clone();
        // Refs pointing at one scenario share one instance so its turn counters stay coherent.
        let mut by_scenario: Vec<(Arc<ScriptedScenario>, Arc<dyn ChatBackend>)> = Vec::new();
        for (name, scenario) in &self.scenarios {
            let backend = match by_scenario.iter().find(|(s, _)| Arc::ptr_eq(s, scenario)) {
                Some((_, b)) => b.clone(),
                None => {
                    let b: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::new(scenario.clone()));
                    by_scenario.push((scenario.clone(), b.clone()));
                    b
                }
            };
            out.insert(name.clone(), backend);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::new("m", vec![ChatMessage::system(""), ChatMessage::user("hi")], "r1");
        ok.validate().unwrap();
        assert_eq!(ok.temperature, 0.2);
        let mut bad = ok.clone();
        bad.messages = vec![ChatMessage::assistant("x")];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.messages.clear();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.temperature = 2.5;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.messages.push(ChatMessage::user(""));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn backend_spec_json() {
        let spec: BackendSpec =
            serde_json::from_str(r#"{"kind":"scripted","scenario":"demo.json"}"#).unwrap();
        assert_eq!(spec, BackendSpec::Scripted { scenario: "demo.json".into() });
        let spec: BackendSpec =
            serde_json::from_str(r#"{"kind":"http","endpoint":"http://localhost:8000/v1/chat/completions"}"#)
                .unwrap();
        assert!(matches!(spec, BackendSpec::Http(s) if s.max_retries == 3));
    }
}
