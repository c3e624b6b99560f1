use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    estimate_tokens, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, TokenCounts,
};
use crate::sync::Limiter;

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSettings {
    /// Chat-completions URL. `QUORUM_ENDPOINT_<REF>` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Per-request timeout. `QUORUM_TIMEOUT_SECS` overrides it.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further one.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
        }
    }
}

/// `foo-bar.v2` -> `FOO_BAR_V2`
fn env_suffix(backend_ref: &str) -> String {
    backend_ref
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect()
}

fn env_nonempty(key: &str) -> Option<String> {
    std::env::var(key).ok().filter(|v| !v.trim().is_empty())
}

/// Speaks the common JSON chat-completions protocol over HTTP.
pub struct HttpBackend {
    endpoint: Option<String>,
    api_key: Option<String>,
    client: Result<reqwest::blocking::Client, String>,
    max_retries: u32,
    backoff: Duration,
    in_flight: Limiter,
}

enum Failure {
    Timeout,
    Transport(String),
}

impl HttpBackend {
    /// Applies `QUORUM_ENDPOINT_<REF>`, `QUORUM_API_KEY_<REF>` (or `QUORUM_API_KEY`)
    /// and `QUORUM_TIMEOUT_SECS` on top of `settings`.
    pub fn from_settings(backend_ref: &str, settings: &HttpSettings) -> Self {
        let suffix = env_suffix(backend_ref);
        let endpoint = env_nonempty(&format!("QUORUM_ENDPOINT_{suffix}")).or_else(|| settings.endpoint.clone());
        let api_key = env_nonempty(&format!("QUORUM_API_KEY_{suffix}")).or_else(|| env_nonempty("QUORUM_API_KEY"));
        let timeout = env_nonempty("QUORUM_TIMEOUT_SECS")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .unwrap_or(settings.timeout_secs);
        Self::new(endpoint, api_key, settings, timeout)
    }

    pub fn new(endpoint: Option<String>, api_key: Option<String>, settings: &HttpSettings, timeout_secs: f64) -> Self {
        let timeout = if timeout_secs.is_finite() && timeout_secs > 0.0 {
            Duration::from_secs_f64(timeout_secs)
        } else {
            Duration::from_secs_f64(default_timeout_secs())
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string());
        Self {
            endpoint,
            api_key,
            client,
            max_retries: settings.max_retries,
            backoff: Duration::from_millis(settings.backoff_ms),
            in_flight: Limiter::new(settings.max_in_flight),
        }
    }

    fn attempt(
        &self,
        client: &reqwest::blocking::Client,
        endpoint: &str,
        body: &Value,
        req: &ChatRequest,
        started: Instant,
    ) -> Result<Result<ChatResponse, GatewayError>, Failure> {
        let mut call = client.post(endpoint).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(classify)?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transport(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Ok(Err(GatewayError::Protocol {
                request_id: req.request_id.clone(),
                message: format!("HTTP {status}: {snippet}"),
            }));
        }
        Ok(parse_body(&text, req, started))
    }
}

fn classify(e: reqwest::Error) -> Failure {
    if e.is_timeout() {
        Failure::Timeout
    } else {
        Failure::Transport(e.to_string())
    }
}

fn parse_body(text: &str, req: &ChatRequest, started: Instant) -> Result<ChatResponse, GatewayError> {
    let protocol = |message: String| GatewayError::Protocol {
        request_id: req.request_id.clone(),
        message,
    };
    let value: Value = serde_json::from_str(text).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| protocol("no choices".into()))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| protocol("first choice has no message content".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        None | Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let usage = value.get("usage");
    let count = |key: &str| {
        usage
            .and_then(|u| u.get(key))
            .and_then(Value::as_u64)
            .map(|n| n.min(u64::from(u32::MAX)) as u32)
    };
    let token_counts = TokenCounts {
        prompt: count("prompt_tokens").unwrap_or_else(|| estimate_tokens(&req.transcript())),
        completion: count("completion_tokens").unwrap_or_else(|| {
            if finish_reason == FinishReason::Length {
                req.max_tokens
            } else {
                estimate_tokens(&content)
            }
        }),
    };
    Ok(ChatResponse {
        request_id: req.request_id.clone(),
        content,
        finish_reason,
        latency_ms: started.elapsed().as_millis() as u64,
        token_counts,
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let transport = |attempts: u32, message: String| GatewayError::Transport {
            request_id: req.request_id.clone(),
            attempts,
            message,
        };
        let endpoint = self
            .endpoint
            .as_deref()
            .ok_or_else(|| transport(0, "no endpoint configured".into()))?;
        let client = self.client.as_ref().map_err(|e| transport(0, e.clone()))?;
        let body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let _permit = self.in_flight.acquire();
        let started = Instant::now();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let failure = match self.attempt(client, endpoint, &body, req, started) {
                Ok(result) => return result,
                Err(f) => f,
            };
            if attempts > self.max_retries {
                return Err(match failure {
                    Failure::Timeout => GatewayError::Timeout {
                        request_id: req.request_id.clone(),
                        attempts,
                    },
                    Failure::Transport(message) => transport(attempts, message),
                });
            }
            let delay = self.backoff.saturating_mul(1u32 << (attempts - 1).min(16));
            tracing::warn!(request_id = %req.request_id, attempts, ?delay, "retrying chat request");
            std::thread::sleep(delay);
        }
    }
}
