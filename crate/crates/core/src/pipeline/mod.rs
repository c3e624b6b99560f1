//! The per-task decision loop: Director selection, translation, agent verification,
//! compilation and feedback, repeated until the result converges or the budget runs out.

mod driver;
mod extract;
mod ledger;
mod state;
mod workbench;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use driver::{replay, translate, NO_CODE_HINT};
pub use extract::{extract_code_block, NoCodeBlock, CODE_LINE_RATIO};
pub use ledger::{
    check_events, read_ledger, ActionPayload, BeliefPayload, CompilePayload, DonePayload, EventBody, FailedPayload,
    FailureCause, Ledger, LedgerError, LedgerEvent, ModelSelectedPayload, PromptPayload, ResponsePayload, TestPayload,
    VerdictPayload,
};
pub use state::{step, IllegalTransition, Phase, PipelineEvent, PipelineState};
pub use workbench::{LiveWorkbench, ReplayWorkbench, Workbench, WorkbenchError};

use crate::agents::{AgentKind, ConceptVocabulary, FactBase, LintRules};
use crate::compiler::ToolchainConfig;
use crate::director::FilterConfig;
use crate::gateway::{DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::lang::LanguageId;
use crate::prompt::{FewShotExample, PromptError, PromptTemplate, DEFAULT_SHOT_CAP};
use crate::registry::Registry;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;
/// Registry tag marking a model preferred for agent calls.
pub const AGENT_MODEL_TAG: &str = "concept-agent";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Convergence {
    CompileOnly,
    #[default]
    CompileAndAgents,
    CompileAgentsTests,
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationTask {
    pub task_id: String,
    pub source_lang: LanguageId,
    pub target_lang: LanguageId,
    pub source_code: String,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub convergence: Convergence,
}

impl TranslationTask {
    pub fn new(
        task_id: impl Into<String>,
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
        source_code: impl Into<String>,
    ) -> Self {
        Self {
            task_id: task_id.into(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            source_code: source_code.into(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            convergence: Convergence::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: &str| Err(PipelineError::InvalidTask(m.to_string()));
        if self.task_id.trim().is_empty() {
            return invalid("task_id is empty");
        }
        if self.source_lang == self.target_lang {
            return invalid("source and target language are the same");
        }
        if self.source_code.trim().is_empty() {
            return invalid("source code is empty");
        }
        if self.max_attempts == 0 {
            return invalid("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeStatus {
    Success,
    FailedBudget,
    FailedAbort,
    FailedInfra,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "SUCCESS",
            Self::FailedBudget => "FAILED_BUDGET",
            Self::FailedAbort => "FAILED_ABORT",
            Self::FailedInfra => "FAILED_INFRA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    pub task_id: String,
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_code: Option<String>,
    pub attempts_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_path: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error(transparent)]
    Ledger(LedgerError),
    #[error("replay diverged at seq {seq}: {detail}")]
    ReplayDivergence { seq: u64, detail: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl From<LedgerError> for PipelineError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Divergence { seq, expected, actual } => Self::ReplayDivergence {
                seq,
                detail: format!("expected {expected}, recomputed {actual}"),
            },
            other => Self::Ledger(other),
        }
    }
}

/// Key used for per-pair configuration maps.
pub fn pair_key(source_lang: &str, target_lang: &str) -> String {
    format!("{source_lang}->{target_lang}")
}

/// Everything a task needs besides model and toolchain access. Shared read-only across
/// concurrent tasks.
#[derive(Debug, Clone)]
pub struct EngineDeps {
    pub registry: Registry,
    /// Filter tables, prior and policy.
    pub filter: FilterConfig,
    /// Agents in execution order.
    pub agents: Vec<AgentKind>,
    pub agent_model: Option<String>,
    pub toolchains: BTreeMap<LanguageId, ToolchainConfig>,
    pub translation_template: PromptTemplate,
    pub refinement_template: PromptTemplate,
    /// Keyed by [`pair_key`].
    pub few_shots: BTreeMap<String, Vec<FewShotExample>>,
    pub shot_cap: usize,
    pub fact_bases: BTreeMap<LanguageId, FactBase>,
    /// Keyed by [`pair_key`]; pairs without an entry use the defaults.
    pub lint_rules: BTreeMap<String, LintRules>,
    pub vocabulary: ConceptVocabulary,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl EngineDeps {
    pub fn new(registry: Registry) -> Self {
        Self {
            registry,
            filter: FilterConfig::default(),
            agents: vec![
                AgentKind::Explainer,
                AgentKind::FactChecker,
                AgentKind::ConceptVerifier,
                AgentKind::ArtifactLinter,
            ],
            agent_model: None,
            toolchains: BTreeMap::new(),
            translation_template: PromptTemplate::default_translation(),
            refinement_template: PromptTemplate::default_refinement(),
            few_shots: BTreeMap::new(),
            shot_cap: DEFAULT_SHOT_CAP,
            fact_bases: BTreeMap::new(),
            lint_rules: BTreeMap::new(),
            vocabulary: ConceptVocabulary::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Agents that run under `mode`: none for COMPILE_ONLY, the configured ones without
    /// the test generator for COMPILE_AND_AGENTS, and the configured ones plus the test
    /// generator for COMPILE_AGENTS_TESTS.
    pub fn agents_for(&self, mode: Convergence) -> Vec<AgentKind> {
        match mode {
            Convergence::CompileOnly => Vec::new(),
            Convergence::CompileAndAgents => {
                self.agents.iter().copied().filter(|&a| a != AgentKind::TestGenerator).collect()
            }
            Convergence::CompileAgentsTests => {
                let mut agents = self.agents.clone();
                if !agents.contains(&AgentKind::TestGenerator) {
                    agents.push(AgentKind::TestGenerator);
                }
                agents
            }
        }
    }

    /// The configured agent model, else the lowest-id registry model tagged
    /// [`AGENT_MODEL_TAG`], else `fallback`.
    pub fn agent_model_or(&self, fallback: &str) -> String {
        self.agent_model
            .clone()
            .or_else(|| {
                self.registry
                    .profiles()
                    .find(|p| p.tags.contains(AGENT_MODEL_TAG))
                    .map(|p| p.model_id.clone())
            })
            .unwrap_or_else(|| fallback.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_invariants() {
        let ok = TranslationTask::new("t", "python", "c", "print(1)");
        ok.validate().unwrap();
        assert!(TranslationTask::new("t", "c", "c", "x").validate().is_err());
        assert!(TranslationTask::new("t", "python", "c", "  ").validate().is_err());
        let parsed: TranslationTask =
            serde_json::from_str(r#"{"task_id":"a","source_lang":"python","target_lang":"c","source_code":"x"}"#).unwrap();
        assert_eq!((parsed.max_attempts, parsed.convergence), (5, Convergence::CompileAndAgents));
    }
}
