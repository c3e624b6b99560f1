use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    estimate_tokens, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError,
    ScenarioError, TokenCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Timeout,
    Transport,
}

/// One canned reply. All present matchers must hold for the rule to fire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    /// Substring of the request transcript (all message contents joined by newlines).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// 0-based count of earlier requests this backend instance received for the same model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
    #[serde(default)]
    pub response: String,
    #[serde(default)]
    pub finish_reason: FinishReason,
    /// Simulates a gateway failure instead of answering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedFailure>,
}

impl ScriptRule {
    fn matches(&self, req: &ChatRequest, transcript: &str, turn: usize) -> bool {
        self.contains.as_deref().map_or(true, |s| transcript.contains(s))
            && self.model.as_deref().map_or(true, |m| m == req.model_id)
            && self.turn.map_or(true, |t| t == turn)
    }
}

/// The translation job a scenario was written for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub source_lang: String,
    pub target_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_code: Option<String>,
    /// Relative paths are resolved against the scenario file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedScenario {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<ScenarioTask>,
}

impl ScriptedScenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn load_scenario(path: &Path) -> Result<ScriptedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario = ScriptedScenario::from_json(&text).map_err(|source| ScenarioError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(task) = &mut scenario.task {
        if let Some(p) = &task.source_path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                task.source_path = Some(base.join(p));
            }
        }
    }
    Ok(scenario)
}

/// Answers from a [`ScriptedScenario`]; first matching rule wins.
pub struct ScriptedBackend {
    scenario: Arc<ScriptedScenario>,
    turns: Mutex<BTreeMap<String, usize>>,
}

impl ScriptedBackend {
    pub fn new(scenario: Arc<ScriptedScenario>) -> Self {
        Self {
            scenario,
            turns: Mutex::new(BTreeMap::new()),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let transcript = req.transcript();
        // Held across matching so turn indices stay coherent under concurrency.
        let mut turns = self.turns.lock().unwrap_or_else(|e| e.into_inner());
        let turn = turns.entry(req.model_id.clone()).or_insert(0);
        let rule = self
            .scenario
            .rules
            .iter()
            .find(|r| r.matches(req, &transcript, *turn));
        *turn += 1;
        drop(turns);

        let (content, finish_reason) = match rule {
            Some(rule) => {
                match rule.error {
                    Some(ScriptedFailure::Timeout) => {
                        return Err(GatewayError::Timeout {
                            request_id: req.request_id.clone(),
                            attempts: 1,
                        })
                    }
                    Some(ScriptedFailure::Transport) => {
                        return Err(GatewayError::Transport {
                            request_id: req.request_id.clone(),
                            attempts: 1,
                            message: "scripted transport failure".into(),
                        })
                    }
                    None => {}
                }
                (rule.response.clone(), rule.finish_reason)
            }
            None => (self.scenario.default_response.clone(), FinishReason::Stop),
        };
        let completion = if finish_reason == FinishReason::Length {
            req.max_tokens
        } else {
            estimate_tokens(&content)
        };
        Ok(ChatResponse {
            request_id: req.request_id.clone(),
            content,
            finish_reason,
            latency_ms: 0,
            token_counts: TokenCounts {
                prompt: estimate_tokens(&transcript),
                completion,
            },
        })
    }
}
