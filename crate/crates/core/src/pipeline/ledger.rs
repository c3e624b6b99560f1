//! Append-only JSONL run ledger, one event per line.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{OutcomeStatus, TranslationTask};
use crate::agents::AgentVerdict;
use crate::compiler::{CompileResult, TestReport};
use crate::director::{DirectorAction, Observation, Suggestion};
use crate::gateway::{ChatMessage, FinishReason, TokenCounts};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ledger at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("replay diverged at seq {seq}: expected {expected}, recomputed {actual}")]
    Divergence { seq: u64, expected: String, actual: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectedPayload {
    pub model_id: String,
    pub attempt_no: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub request_id: String,
    pub purpose: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePayload {
    pub request_id: String,
    pub purpose: String,
    pub model_id: String,
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub token_counts: TokenCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictPayload {
    pub attempt_no: u32,
    pub verdict: AgentVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompilePayload {
    pub attempt_no: u32,
    pub result: CompileResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPayload {
    pub attempt_no: u32,
    /// False when no tests were available and the report was synthesized.
    pub executed: bool,
    pub report: TestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPayload {
    pub step: u32,
    pub action: DirectorAction,
    pub observation: Observation,
    pub suggestion: Suggestion,
    /// `(state, probability)` in state-space order.
    pub belief: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub action: DirectorAction,
    pub attempt_no: u32,
    pub attempts_left: u32,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonePayload {
    pub final_code: String,
    pub attempts_used: u32,
    pub model_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCause {
    Budget,
    Abort,
    ToolchainMissing,
    NoCandidate,
    Backend,
    Toolchain,
    Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPayload {
    pub status: OutcomeStatus,
    pub cause: FailureCause,
    pub reason: String,
    pub attempts_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventBody {
    TaskStart(TranslationTask),
    ModelSelected(ModelSelectedPayload),
    PromptBuilt(PromptPayload),
    LlmResponse(ResponsePayload),
    AgentVerdict(VerdictPayload),
    CompileResult(CompilePayload),
    TestReport(TestPayload),
    BeliefUpdated(BeliefPayload),
    ActionChosen(ActionPayload),
    TaskDone(DonePayload),
    TaskFailed(FailedPayload),
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::TaskStart(_) => "TASK_START",
            Self::ModelSelected(_) => "MODEL_SELECTED",
            Self::PromptBuilt(_) => "PROMPT_BUILT",
            Self::LlmResponse(_) => "LLM_RESPONSE",
            Self::AgentVerdict(_) => "AGENT_VERDICT",
            Self::CompileResult(_) => "COMPILE_RESULT",
            Self::TestReport(_) => "TEST_REPORT",
            Self::BeliefUpdated(_) => "BELIEF_UPDATED",
            Self::ActionChosen(_) => "ACTION_CHOSEN",
            Self::TaskDone(_) => "TASK_DONE",
            Self::TaskFailed(_) => "TASK_FAILED",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Self::TaskDone(_) | Self::TaskFailed(_))
    }

    /// Events checked against the recording in verify mode.
    pub fn is_decision(&self) -> bool {
        matches!(self, Self::ModelSelected(_) | Self::ActionChosen(_) | Self::BeliefUpdated(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    pub task_id: String,
    pub timestamp: String,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Per-task event log. Events are always kept in memory; a file sink and a
/// verification queue are optional.
#[derive(Debug)]
pub struct Ledger {
    task_id: String,
    path: Option<PathBuf>,
    sink: Option<BufWriter<File>>,
    events: Vec<LedgerEvent>,
    expected: Option<VecDeque<LedgerEvent>>,
}

impl Ledger {
    pub fn in_memory(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            path: None,
            sink: None,
            events: Vec::new(),
            expected: None,
        }
    }

    /// Creates or truncates `path`.
    pub fn create(task_id: impl Into<String>, path: &Path) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = File::create(path).map_err(io)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            sink: Some(BufWriter::new(file)),
            ..Self::in_memory(task_id)
        })
    }

    /// Compares every decision event appended from now on with the decision events of
    /// `recorded`, in order.
    pub fn verify_against(mut self, recorded: &[LedgerEvent]) -> Self {
        self.expected = Some(recorded.iter().filter(|e| e.body.is_decision()).cloned().collect());
        self
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<LedgerEvent> {
        self.events
    }

    pub fn append(&mut self, body: EventBody) -> Result<(), LedgerError> {
        let event = LedgerEvent {
            seq: self.events.len() as u64 + 1,
            task_id: self.task_id.clone(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            body,
        };
        if let (Some(expected), true) = (self.expected.as_mut(), event.body.is_decision()) {
            let describe = |b: &EventBody| serde_json::to_string(b).unwrap_or_else(|_| b.kind().to_string());
            match expected.pop_front() {
                Some(recorded) if recorded.body == event.body => {}
                Some(recorded) => {
                    return Err(LedgerError::Divergence {
                        seq: recorded.seq,
                        expected: describe(&recorded.body),
                        actual: describe(&event.body),
                    })
                }
                None => {
                    return Err(LedgerError::Divergence {
                        seq: event.seq,
                        expected: "no further decisions".into(),
                        actual: describe(&event.body),
                    })
                }
            }
        }
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("ledger events serialize");
            let path = self.path.clone().unwrap_or_default();
            writeln!(sink, "{line}")
                .and_then(|_| sink.flush())
                .map_err(|source| LedgerError::Io { path, source })?;
        }
        self.events.push(event);
        Ok(())
    }

    /// Fails when verification expected more decisions than were made.
    pub fn finish(&self) -> Result<(), LedgerError> {
        if let Some(next) = self.expected.as_ref().and_then(|q| q.front()) {
            return Err(LedgerError::Divergence {
                seq: next.seq,
                expected: serde_json::to_string(&next.body).unwrap_or_default(),
                actual: "run ended".into(),
            });
        }
        Ok(())
    }
}

/// Reads and checks a complete ledger: parseable lines, one task id, gapless `seq`
/// from 1, a TASK_START first and exactly one terminal event, last.
pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEvent>, LedgerError> {
    let file = File::open(path).map_err(|source| LedgerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LedgerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LedgerEvent = serde_json::from_str(&line).map_err(|e| LedgerError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    check_events(&events)?;
    Ok(events)
}

pub fn check_events(events: &[LedgerEvent]) -> Result<(), LedgerError> {
    let bad = |line: usize, message: &str| LedgerError::Parse {
        line,
        message: message.to_string(),
    };
    let first = events.first().ok_or_else(|| bad(1, "empty ledger"))?;
    if !matches!(first.body, EventBody::TaskStart(_)) {
        return Err(bad(1, "first event is not TASK_START"));
    }
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(bad(i + 1, "sequence numbers are not gapless"));
        }
        if e.task_id != first.task_id {
            return Err(bad(i + 1, "mixed task ids"));
        }
        if e.body.is_terminal() && i + 1 != events.len() {
            return Err(bad(i + 1, "events after the terminal event"));
        }
    }
    if !events.last().is_some_and(|e| e.body.is_terminal()) {
        return Err(bad(events.len(), "ledger is truncated: no terminal event"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::director::ActionKind;

    fn action(kind: ActionKind) -> EventBody {
        EventBody::ActionChosen(ActionPayload {
            action: DirectorAction::bare(kind),
            attempt_no: 1,
            attempts_left: 4,
            converged: false,
        })
    }

    #[test]
    fn event_shape() {
        let event = LedgerEvent {
            seq: 3,
            task_id: "t".into(),
            timestamp: "2026-01-01T00:00:00+00:00".into(),
            body: action(ActionKind::Refine),
        };
        let v: serde_json::Value = serde_json::to_value(&event).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["kind", "payload", "seq", "task_id", "timestamp"]);
        assert_eq!(v["kind"], "ACTION_CHOSEN");
        assert_eq!(v["payload"]["action"]["kind"], "REFINE");
        let back: LedgerEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, event);
    }

    #[test]
    fn beliefs_roundtrip_exactly() {
        let body = EventBody::BeliefUpdated(BeliefPayload {
            step: 1,
            action: DirectorAction::select_model("m1"),
            observation: Observation::new("COMPILE_ERR"),
            suggestion: Suggestion::none(),
            belief: vec![("ON_TRACK".into(), 0.0225 / 0.2125), ("X".into(), 1.0 - 0.0225 / 0.2125)],
        });
        let text = serde_json::to_string(&body).unwrap();
        assert_eq!(serde_json::from_str::<EventBody>(&text).unwrap(), body);
    }

    #[test]
    fn verify_mode_flags_first_difference() {
        let mut rec = Ledger::in_memory("t");
        rec.append(action(ActionKind::Refine)).unwrap();
        rec.append(action(ActionKind::Accept)).unwrap();
        let recorded = rec.into_events();

        let mut same = Ledger::in_memory("t").verify_against(&recorded);
        same.append(action(ActionKind::Refine)).unwrap();
        same.append(action(ActionKind::Accept)).unwrap();
        same.finish().unwrap();

        let mut diff = Ledger::in_memory("t").verify_against(&recorded);
        diff.append(action(ActionKind::Refine)).unwrap();
        let err = diff.append(action(ActionKind::Abort)).unwrap_err();
        assert!(matches!(err, LedgerError::Divergence { seq: 2, .. }));

        let mut short = Ledger::in_memory("t").verify_against(&recorded);
        short.append(action(ActionKind::Refine)).unwrap();
        assert!(short.finish().is_err());
    }

    #[test]
    fn file_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/t.jsonl");
        let mut ledger = Ledger::create("t", &path).unwrap();
        ledger
            .append(EventBody::TaskStart(TranslationTask::new("t", "python", "c", "print(1)")))
            .unwrap();
        ledger.append(action(ActionKind::Refine)).unwrap();
        assert!(matches!(read_ledger(&path), Err(LedgerError::Parse { .. })));
        ledger
            .append(EventBody::TaskFailed(FailedPayload {
                status: OutcomeStatus::FailedAbort,
                cause: FailureCause::Abort,
                reason: "x".into(),
                attempts_used: 1,
            }))
            .unwrap();
        assert_eq!(read_ledger(&path).unwrap().len(), 3);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 20]).unwrap();
        assert!(matches!(read_ledger(&path), Err(LedgerError::Parse { .. })));
    }
}
