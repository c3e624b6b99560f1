//! The verification ensemble run on each candidate translation: explainer, concept
//! verifier, symbolic fact checker, test generator and artifact linter.

mod blueprint;
mod lint;
mod nli;
mod roles;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatMessage, GatewayError};

pub use blueprint::{
    explain_concepts, parse_blueprint, ConceptBlueprint, ConceptDef, ConceptVocabulary,
    EXPLAIN_CONCEPTS_MARKER,
};
pub use lint::{lint_translation, statement_count, LintRules};
pub use nli::{extract_claims, nli_check, normalize, Fact, FactBase};
pub use roles::{
    explain_translation, generate_tests, parse_concept_verdict, verify_concepts,
    EXPLAIN_TRANSLATION_MARKER, GENERATE_TESTS_MARKER, VERIFY_CONCEPTS_MARKER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("response has no fenced code block")]
    NoCodeBlock,
    #[error("no agents configured")]
    NoAgents,
    #[error("invalid fact base: {0}")]
    InvalidFactBase(String),
    #[error("invalid lint rules: {0}")]
    InvalidLintRules(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HintKind {
    MissingDefinition,
    SyntaxLeak,
    ApiMismatch,
    LogicRemoved,
    CompilerDirected,
    Style,
}

impl HintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingDefinition => "MISSING_DEFINITION",
            Self::SyntaxLeak => "SYNTAX_LEAK",
            Self::ApiMismatch => "API_MISMATCH",
            Self::LogicRemoved => "LOGIC_REMOVED",
            Self::CompilerDirected => "COMPILER_DIRECTED",
            Self::Style => "STYLE",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(text.trim().to_ascii_uppercase())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    PositiveExample,
    NegativeExample,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hint {
    pub kind: HintKind,
    pub message: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClaimLabel {
    Entailed,
    Contradicted,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub label: ClaimLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentKind {
    Explainer,
    ConceptVerifier,
    FactChecker,
    TestGenerator,
    ArtifactLinter,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Explainer => "EXPLAINER",
            Self::ConceptVerifier => "CONCEPT_VERIFIER",
            Self::FactChecker => "FACT_CHECKER",
            Self::TestGenerator => "TEST_GENERATOR",
            Self::ArtifactLinter => "ARTIFACT_LINTER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub agent_kind: AgentKind,
    pub verdict: Verdict,
    #[serde(default)]
    pub claims: Vec<Claim>,
    #[serde(default)]
    pub hints: Vec<Hint>,
    #[serde(default)]
    pub payload: String,
}

impl AgentVerdict {
    pub fn pass(agent_kind: AgentKind, payload: String) -> Self {
        Self {
            agent_kind,
            verdict: Verdict::Pass,
            claims: Vec::new(),
            hints: Vec::new(),
            payload,
        }
    }

    pub fn uncertain(agent_kind: AgentKind, payload: String) -> Self {
        Self {
            verdict: Verdict::Uncertain,
            ..Self::pass(agent_kind, payload)
        }
    }

    /// A FAIL always carries hints; an empty list gets a generic one.
    pub fn fail(agent_kind: AgentKind, mut hints: Vec<Hint>, payload: String) -> Self {
        if hints.is_empty() {
            hints.push(Hint {
                kind: HintKind::Style,
                message: format!("{} rejected the translation", agent_kind.as_str()),
                polarity: Polarity::Instruction,
                snippet: None,
            });
        }
        Self {
            agent_kind,
            verdict: Verdict::Fail,
            claims: Vec::new(),
            hints,
            payload,
        }
    }

    pub fn with_claims(mut self, claims: Vec<Claim>) -> Self {
        self.claims = claims;
        self
    }
}

/// Model access for agents that need it. `purpose` names the agent for the run ledger.
pub trait AgentLlm {
    fn ask(&mut self, purpose: &str, messages: Vec<ChatMessage>) -> Result<String, GatewayError>;
}

/// Everything the agents look at for one candidate translation.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub source_lang: &'a str,
    pub target_lang: &'a str,
    pub source_code: &'a str,
    pub translated_code: &'a str,
    pub blueprint: Option<&'a ConceptBlueprint>,
    pub fact_base: Option<&'a FactBase>,
    pub lint_rules: &'a LintRules,
}

fn fact_check(claims: &[Claim], fact_base: Option<&FactBase>) -> AgentVerdict {
    let Some(base) = fact_base else {
        return AgentVerdict::uncertain(AgentKind::FactChecker, "no fact base for target language".into());
    };
    let labeled = nli_check(claims, base);
    let hints: Vec<Hint> = labeled
        .iter()
        .filter(|c| c.label == ClaimLabel::Contradicted)
        .map(|c| {
            let fact = base
                .facts
                .iter()
                .find(|f| Some(&f.fact_id) == c.evidence.as_ref())
                .map_or(String::new(), |f| format!(" ({})", f.statement));
            Hint {
                kind: HintKind::ApiMismatch,
                message: format!("\"{}\" contradicts {} fact {}{fact}", c.text, base.language, c.evidence.as_deref().unwrap_or("?")),
                polarity: Polarity::NegativeExample,
                snippet: None,
            }
        })
        .collect();
    let verdict = if !hints.is_empty() {
        AgentVerdict::fail(AgentKind::FactChecker, hints, String::new())
    } else if labeled.iter().any(|c| c.label == ClaimLabel::Entailed) {
        AgentVerdict::pass(AgentKind::FactChecker, String::new())
    } else {
        AgentVerdict::uncertain(AgentKind::FactChecker, String::new())
    };
    verdict.with_claims(labeled)
}

/// Payload prefix of verdicts produced by an agent that could not run.
pub const AGENT_ERROR_PREFIX: &str = "agent error: ";

fn errored(kind: AgentKind, err: &AgentError) -> AgentVerdict {
    AgentVerdict::uncertain(kind, format!("{AGENT_ERROR_PREFIX}{err}"))
}

/// Runs `agents` in order. The fact checker labels the claims of the most recent
/// explainer output. Per-agent failures become UNCERTAIN verdicts.
pub fn run_agents(
    ctx: &AgentContext<'_>,
    agents: &[AgentKind],
    llm: &mut dyn AgentLlm,
) -> Result<Vec<AgentVerdict>, AgentError> {
    if agents.is_empty() {
        return Err(AgentError::NoAgents);
    }
    let mut verdicts = Vec::with_capacity(agents.len());
    let mut claims: Vec<Claim> = Vec::new();
    for &kind in agents {
        let verdict = match kind {
            AgentKind::Explainer => match explain_translation(ctx, llm) {
                Ok(explanation) => {
                    claims = extract_claims(&explanation);
                    let v = if explanation.trim().is_empty() {
                        AgentVerdict::uncertain(kind, explanation)
                    } else {
                        AgentVerdict::pass(kind, explanation)
                    };
                    v.with_claims(claims.clone())
                }
                Err(e) => errored(kind, &e),
            },
            AgentKind::FactChecker => fact_check(&claims, ctx.fact_base),
            AgentKind::ConceptVerifier => match ctx.blueprint {
                None => AgentVerdict::uncertain(kind, "no conceptual blueprint".into()),
                Some(bp) => verify_concepts(ctx, bp, llm).unwrap_or_else(|e| errored(kind, &e)),
            },
            AgentKind::TestGenerator => generate_tests(ctx, llm).unwrap_or_else(|e| errored(kind, &e)),
            AgentKind::ArtifactLinter => lint_translation(
                ctx.source_code,
                ctx.translated_code,
                ctx.source_lang,
                ctx.target_lang,
                ctx.lint_rules,
            )
            .unwrap_or_else(|e| errored(kind, &e)),
        };
        verdicts.push(verdict);
    }
    Ok(verdicts)
}

/// Unanimity: the batch passes iff no verdict is FAIL.
pub fn agents_pass(verdicts: &[AgentVerdict]) -> bool {
    verdicts.iter().all(|v| v.verdict != Verdict::Fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    struct Canned(VecDeque<Result<String, GatewayError>>, Vec<String>);

    impl AgentLlm for Canned {
        fn ask(&mut self, purpose: &str, _messages: Vec<ChatMessage>) -> Result<String, GatewayError> {
            self.1.push(purpose.to_string());
            self.0.pop_front().unwrap_or_else(|| Ok(String::new()))
        }
    }

    fn facts() -> FactBase {
        FactBase::from_json(
            r#"{"language":"c","facts":[{"fact_id":"c1","statement":"printf writes formatted output","negations":["printf returns a string"]}]}"#,
        )
        .unwrap()
    }

    fn ctx<'a>(rules: &'a LintRules, base: &'a FactBase) -> AgentContext<'a> {
        AgentContext {
            source_lang: "python",
            target_lang: "c",
            source_code: "print(1 + 2)",
            translated_code: "#include <stdio.h>\nint main(void) { printf(\"%d\\n\", 1 + 2); return 0; }",
            blueprint: None,
            fact_base: Some(base),
            lint_rules: rules,
        }
    }

    #[test]
    fn explainer_feeds_fact_checker() {
        let rules = LintRules::default();
        let base = facts();
        let mut llm = Canned(
            VecDeque::from([Ok("The program uses printf. printf writes formatted output to stdout.".to_string())]),
            Vec::new(),
        );
        let verdicts = run_agents(
            &ctx(&rules, &base),
            &[AgentKind::Explainer, AgentKind::FactChecker, AgentKind::ArtifactLinter],
            &mut llm,
        )
        .unwrap();
        assert_eq!(verdicts[0].verdict, Verdict::Pass);
        assert_eq!(verdicts[1].verdict, Verdict::Pass);
        assert_eq!(verdicts[1].claims[1].label, ClaimLabel::Entailed);
        assert_eq!(verdicts[2].verdict, Verdict::Pass);
        assert!(agents_pass(&verdicts));
        assert_eq!(llm.1, ["EXPLAINER"]);
    }

    #[test]
    fn contradiction_fails_with_hint() {
        let rules = LintRules::default();
        let base = facts();
        let mut llm = Canned(VecDeque::from([Ok("Here printf returns a string value.".to_string())]), Vec::new());
        let verdicts = run_agents(&ctx(&rules, &base), &[AgentKind::Explainer, AgentKind::FactChecker], &mut llm).unwrap();
        assert_eq!(verdicts[1].verdict, Verdict::Fail);
        assert_eq!(verdicts[1].hints[0].kind, HintKind::ApiMismatch);
        assert!(!agents_pass(&verdicts));
    }

    #[test]
    fn backend_failure_is_isolated() {
        let rules = LintRules::default();
        let base = facts();
        let mut llm = Canned(
            VecDeque::from([Err(GatewayError::Timeout { request_id: "r".into(), attempts: 1 })]),
            Vec::new(),
        );
        let verdicts = run_agents(
            &ctx(&rules, &base),
            &[AgentKind::Explainer, AgentKind::ArtifactLinter],
            &mut llm,
        )
        .unwrap();
        assert_eq!(verdicts[0].verdict, Verdict::Uncertain);
        assert!(verdicts[0].payload.contains("timed out"));
        assert_eq!(verdicts[1].verdict, Verdict::Pass);
        assert!(agents_pass(&verdicts));
    }

    #[test]
    fn empty_agent_list() {
        let rules = LintRules::default();
        let base = facts();
        let mut llm = Canned(VecDeque::new(), Vec::new());
        assert_eq!(run_agents(&ctx(&rules, &base), &[], &mut llm), Err(AgentError::NoAgents));
    }

    #[test]
    fn fail_always_has_hints() {
        let v = AgentVerdict::fail(AgentKind::ConceptVerifier, Vec::new(), String::new());
        assert_eq!(v.hints.len(), 1);
    }

    proptest! {
        #[test]
        fn aggregation_is_order_independent(kinds in proptest::collection::vec(0u8..3, 0..10), seed in any::<u64>()) {
            let mut verdicts: Vec<AgentVerdict> = kinds
                .iter()
                .map(|k| match k {
                    0 => AgentVerdict::pass(AgentKind::Explainer, String::new()),
                    1 => AgentVerdict::uncertain(AgentKind::TestGenerator, String::new()),
                    _ => AgentVerdict::fail(AgentKind::ArtifactLinter, Vec::new(), String::new()),
                })
                .collect();
            let before = agents_pass(&verdicts);
            if !verdicts.is_empty() {
                let n = verdicts.len();
                verdicts.rotate_left(seed as usize % n);
                verdicts.reverse();
            }
            prop_assert_eq!(agents_pass(&verdicts), before);
            prop_assert_eq!(before, !kinds.contains(&2));
        }
    }
}
