//! The per-task state machine. `step` is pure; the driver performs the side effects.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Hint;
use crate::director::{ActionKind, BeliefState, DirectorAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Init,
    Select,
    Translate,
    Verify,
    Compile,
    Feedback,
    Done,
    Failed,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Init,
        Phase::Select,
        Phase::Translate,
        Phase::Verify,
        Phase::Compile,
        Phase::Feedback,
        Phase::Done,
        Phase::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    Start,
    ModelSelected { model_id: String },
    /// `None` when no code block could be extracted from the response.
    LlmResponse { code: Option<String>, hint: Option<Hint> },
    AgentsCompleted,
    CompileCompleted { hints: Vec<Hint> },
    BeliefUpdated { belief: BeliefState },
    ActionChosen { action: DirectorAction },
    InfraFailure { reason: String },
}

impl PipelineEvent {
    pub fn name(&self) -> String {
        match self {
            Self::Start => "START".into(),
            Self::ModelSelected { .. } => "MODEL_SELECTED".into(),
            Self::LlmResponse { .. } => "LLM_RESPONSE".into(),
            Self::AgentsCompleted => "AGENTS_COMPLETED".into(),
            Self::CompileCompleted { .. } => "COMPILE_COMPLETED".into(),
            Self::BeliefUpdated { .. } => "BELIEF_UPDATED".into(),
            Self::ActionChosen { action } => format!("ACTION_CHOSEN({})", action.kind),
            Self::InfraFailure { .. } => "INFRA_FAILURE".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("illegal transition: {event} in phase {phase}")]
pub struct IllegalTransition {
    pub phase: Phase,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub phase: Phase,
    pub attempt_no: u32,
    pub max_attempts: u32,
    pub current_model: Option<String>,
    pub used_models: BTreeSet<String>,
    pub belief: BeliefState,
    pub last_output: Option<String>,
    pub pending_hints: Vec<Hint>,
}

impl PipelineState {
    pub fn new(prior: BeliefState, max_attempts: u32) -> Self {
        Self {
            phase: Phase::Init,
            attempt_no: 0,
            max_attempts,
            current_model: None,
            used_models: BTreeSet::new(),
            belief: prior,
            last_output: None,
            pending_hints: Vec::new(),
        }
    }

    pub fn attempts_left(&self) -> u32 {
        self.max_attempts.saturating_sub(self.attempt_no)
    }
}

/// Applies one event. Legal transitions:
///
/// | phase    | event                       | next      |
/// |----------|-----------------------------|-----------|
/// | INIT     | Start                       | SELECT    |
/// | SELECT   | ModelSelected               | TRANSLATE (attempt + 1) |
/// | TRANSLATE| LlmResponse with code       | VERIFY    |
/// | TRANSLATE| LlmResponse without code    | FEEDBACK  |
/// | VERIFY   | AgentsCompleted             | COMPILE   |
/// | COMPILE  | CompileCompleted            | FEEDBACK  |
/// | FEEDBACK | BeliefUpdated               | FEEDBACK  |
/// | FEEDBACK | ActionChosen(ACCEPT)        | DONE      |
/// | FEEDBACK | ActionChosen(REFINE)        | TRANSLATE (attempt + 1) |
/// | FEEDBACK | ActionChosen(RESELECT)      | SELECT    |
/// | FEEDBACK | ActionChosen(ABORT)         | FAILED    |
/// | any non-terminal | InfraFailure        | FAILED    |
///
/// Entering TRANSLATE with the budget spent, accepting without output, and reselecting
/// a used model are also illegal.
pub fn step(state: &PipelineState, event: &PipelineEvent) -> Result<PipelineState, IllegalTransition> {
    let illegal = || IllegalTransition {
        phase: state.phase,
        event: event.name(),
    };
    let mut next = state.clone();
    match (state.phase, event) {
        (phase, PipelineEvent::InfraFailure { .. }) if !phase.is_terminal() => {
            next.phase = Phase::Failed;
        }
        (Phase::Init, PipelineEvent::Start) => next.phase = Phase::Select,
        (Phase::Select, PipelineEvent::ModelSelected { model_id }) => {
            if state.attempt_no >= state.max_attempts || state.used_models.contains(model_id) {
                return Err(illegal());
            }
            next.phase = Phase::Translate;
            next.attempt_no += 1;
            next.current_model = Some(model_id.clone());
            next.used_models.insert(model_id.clone());
            next.pending_hints.clear();
        }
        (Phase::Translate, PipelineEvent::LlmResponse { code, hint }) => match code {
            Some(code) => {
                next.phase = Phase::Verify;
                next.last_output = Some(code.clone());
            }
            None => {
                next.phase = Phase::Feedback;
                next.pending_hints = hint.iter().cloned().collect();
            }
        },
        (Phase::Verify, PipelineEvent::AgentsCompleted) => next.phase = Phase::Compile,
        (Phase::Compile, PipelineEvent::CompileCompleted { hints }) => {
            next.phase = Phase::Feedback;
            next.pending_hints = hints.clone();
        }
        (Phase::Feedback, PipelineEvent::BeliefUpdated { belief }) => next.belief = belief.clone(),
        (Phase::Feedback, PipelineEvent::ActionChosen { action }) => match action.kind {
            ActionKind::Accept if state.last_output.is_some() => next.phase = Phase::Done,
            ActionKind::Refine if state.attempt_no < state.max_attempts => {
                next.phase = Phase::Translate;
                next.attempt_no += 1;
            }
            ActionKind::Reselect if state.attempt_no < state.max_attempts => next.phase = Phase::Select,
            ActionKind::Abort => next.phase = Phase::Failed,
            _ => return Err(illegal()),
        },
        _ => return Err(illegal()),
    }
    Ok(next)
}
