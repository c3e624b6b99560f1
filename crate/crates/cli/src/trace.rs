//! Decision trace extracted from ledger events.

use serde::Serialize;

use quorum_core::pipeline::{EventBody, LedgerEvent};

#[derive(Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Step {
    ModelSelected { attempt: u32, model_id: String },
    Compiled { attempt: u32, status: String, errors: usize },
    Belief { step: u32, observation: String, belief: Vec<(String, f64)> },
    Action { attempt: u32, action: String, attempts_left: u32 },
}

pub fn steps(events: &[LedgerEvent]) -> Vec<Step> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::ModelSelected(p) => Some(Step::ModelSelected {
                attempt: p.attempt_no,
                model_id: p.model_id.clone(),
            }),
            EventBody::CompileResult(p) => Some(Step::Compiled {
                attempt: p.attempt_no,
                status: serde_json::to_value(p.result.status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                errors: p.result.errors().count(),
            }),
            EventBody::BeliefUpdated(p) => Some(Step::Belief {
                step: p.step,
                observation: p.observation.kind.clone(),
                belief: p.belief.clone(),
            }),
            EventBody::ActionChosen(p) => Some(Step::Action {
                attempt: p.attempt_no,
                action: p.action.to_string(),
                attempts_left: p.attempts_left,
            }),
            _ => None,
        })
        .collect()
}

pub fn render(steps: &[Step]) -> String {
    let mut out = String::new();
    for s in steps {
        let line = match s {
            Step::ModelSelected { attempt, model_id } => format!("attempt {attempt}: model {model_id}"),
            Step::Compiled { attempt, status, errors } => {
                format!("attempt {attempt}: compile {status} ({errors} errors)")
            }
            Step::Belief { observation, belief, .. } => {
                let b: Vec<String> = belief.iter().map(|(s, p)| format!("{s}={p:.4}")).collect();
                format!("  observed {observation}: {}", b.join(" "))
            }
            Step::Action { attempt, action, attempts_left } => {
                format!("attempt {attempt}: {action} ({attempts_left} left)")
            }
        };
        out += &line;
        out.push('\n');
    }
    out
}
