//! Drives one task through the state machine, performing each phase's side effects.

use std::path::Path;

use tracing::{debug, info};

use super::extract::extract_code_block;
use super::ledger::{
    read_ledger, ActionPayload, BeliefPayload, CompilePayload, DonePayload, EventBody, FailedPayload, FailureCause,
    Ledger, ModelSelectedPayload, PromptPayload, ResponsePayload, TestPayload, VerdictPayload,
};
use super::state::{step, PipelineEvent, PipelineState};
use super::workbench::{ReplayWorkbench, Workbench, WorkbenchError};
use super::{pair_key, Convergence, EngineDeps, OutcomeStatus, PipelineError, TranslationOutcome, TranslationTask};
use crate::agents::{
    agents_pass, explain_concepts, run_agents, AgentContext, AgentKind, AgentLlm, Hint, HintKind, LintRules, Polarity,
    AGENT_ERROR_PREFIX,
};
use crate::compiler::{CompileStatus, Diagnostic, TestReport, TestStatus};
use crate::director::{
    belief_update, select_action, ActionKind, DirectorAction, Observation, Suggestion, AGENTS_FAIL, AGENTS_PASS,
    COMPILE_ERR, COMPILE_OK, TESTS_FAIL, TESTS_PASS,
};
use crate::gateway::{ChatMessage, ChatRequest, ChatResponse, GatewayError};
use crate::prompt::{build_refinement_prompt, build_translation_prompt, PromptTask};

/// Feedback given when a response had no extractable code.
pub const NO_CODE_HINT: &str = "reply with the complete program in a single fenced code block";

enum CallError {
    Gateway(GatewayError),
    Fatal(PipelineError),
}

struct Run<'a> {
    task: &'a TranslationTask,
    deps: &'a EngineDeps,
    bench: &'a mut dyn Workbench,
    ledger: &'a mut Ledger,
    requests: u32,
    state: PipelineState,
}

/// Routes agent model calls through the run so they are numbered and recorded.
struct AgentBridge<'r, 'a> {
    run: &'r mut Run<'a>,
    model_id: String,
    fatal: Option<PipelineError>,
}

impl AgentLlm for AgentBridge<'_, '_> {
    fn ask(&mut self, purpose: &str, messages: Vec<ChatMessage>) -> Result<String, GatewayError> {
        let halted = || GatewayError::InvalidRequest("run halted".into());
        if self.fatal.is_some() {
            return Err(halted());
        }
        match self.run.call(purpose, &self.model_id.clone(), messages, None) {
            Ok(r) => Ok(r.content),
            Err(CallError::Gateway(e)) => Err(e),
            Err(CallError::Fatal(e)) => {
                self.fatal = Some(e);
                Err(halted())
            }
        }
    }
}

fn observe(mode: Convergence, compiled: bool, tests: Option<&TestReport>, agents_ok: bool) -> (&'static str, bool) {
    if !compiled {
        return (COMPILE_ERR, false);
    }
    if mode == Convergence::CompileAgentsTests && tests.is_none_or(|t| t.status != TestStatus::AllPass) {
        return (TESTS_FAIL, false);
    }
    if mode != Convergence::CompileOnly && !agents_ok {
        return (AGENTS_FAIL, false);
    }
    let pass = match mode {
        Convergence::CompileOnly => COMPILE_OK,
        Convergence::CompileAndAgents => AGENTS_PASS,
        Convergence::CompileAgentsTests => TESTS_PASS,
    };
    (pass, true)
}

fn test_hint(report: &TestReport) -> Hint {
    let failures: Vec<&str> = report.raw_output.lines().filter(|l| l.trim_start().starts_with("FAIL")).take(5).collect();
    Hint {
        kind: HintKind::LogicRemoved,
        message: match report.status {
            TestStatus::SomeFail => format!("{} of {} generated tests failed", report.failed, report.passed + report.failed),
            TestStatus::Timeout => "the generated tests timed out".into(),
            _ => "the generated tests could not be run".into(),
        },
        polarity: Polarity::Instruction,
        snippet: (!failures.is_empty()).then(|| failures.join("; ")),
    }
}

fn divergence(seq: u64, err: WorkbenchError) -> PipelineError {
    PipelineError::ReplayDivergence {
        seq,
        detail: err.to_string(),
    }
}

impl<'a> Run<'a> {
    fn emit(&mut self, body: EventBody) -> Result<(), PipelineError> {
        self.ledger.append(body)?;
        Ok(())
    }

    fn advance(&mut self, event: PipelineEvent) -> Result<(), PipelineError> {
        self.state = step(&self.state, &event)?;
        Ok(())
    }

    fn next_seq(&self) -> u64 {
        self.ledger.events().len() as u64 + 1
    }

    fn call(
        &mut self,
        purpose: &str,
        model_id: &str,
        messages: Vec<ChatMessage>,
        template_id: Option<&str>,
    ) -> Result<ChatResponse, CallError> {
        self.requests += 1;
        let request_id = format!("{}-{}", self.task.task_id, self.requests);
        let mut req = ChatRequest::new(model_id, messages, request_id.clone());
        req.temperature = self.deps.temperature;
        req.max_tokens = self.deps.max_tokens;
        self.emit(EventBody::PromptBuilt(PromptPayload {
            request_id: request_id.clone(),
            purpose: purpose.to_string(),
            model_id: model_id.to_string(),
            template_id: template_id.map(str::to_string),
            messages: req.messages.clone(),
        }))
        .map_err(CallError::Fatal)?;
        debug!(%request_id, purpose, model_id, "model call");
        match self.bench.chat(&req) {
            Ok(resp) => {
                self.emit(EventBody::LlmResponse(ResponsePayload {
                    request_id,
                    purpose: purpose.to_string(),
                    model_id: model_id.to_string(),
                    content: resp.content.clone(),
                    finish_reason: resp.finish_reason,
                    latency_ms: resp.latency_ms,
                    token_counts: resp.token_counts,
                }))
                .map_err(CallError::Fatal)?;
                Ok(resp)
            }
            Err(WorkbenchError::Gateway(e)) => Err(CallError::Gateway(e)),
            Err(e) => Err(CallError::Fatal(divergence(self.next_seq(), e))),
        }
    }

    fn select(&mut self, model_id: &str) -> Result<(), PipelineError> {
        info!(task = %self.task.task_id, model_id, attempt = self.state.attempt_no + 1, "model selected");
        self.emit(EventBody::ModelSelected(ModelSelectedPayload {
            model_id: model_id.to_string(),
            attempt_no: self.state.attempt_no + 1,
        }))?;
        self.advance(PipelineEvent::ModelSelected {
            model_id: model_id.to_string(),
        })
    }

    fn outcome(&self, status: OutcomeStatus, final_code: Option<String>, reason: Option<String>) -> TranslationOutcome {
        TranslationOutcome {
            task_id: self.task.task_id.clone(),
            status,
            final_code,
            attempts_used: self.state.attempt_no,
            model_id: self.state.current_model.clone(),
            reason,
            ledger_path: self.ledger.path().map(Path::to_path_buf),
        }
    }

    fn failed(&mut self, status: OutcomeStatus, cause: FailureCause, reason: String) -> Result<TranslationOutcome, PipelineError> {
        info!(task = %self.task.task_id, status = status.as_str(), %reason, "task failed");
        self.emit(EventBody::TaskFailed(FailedPayload {
            status,
            cause,
            reason: reason.clone(),
            attempts_used: self.state.attempt_no,
        }))?;
        Ok(self.outcome(status, None, Some(reason)))
    }

    fn fail_infra(&mut self, cause: FailureCause, reason: String) -> Result<TranslationOutcome, PipelineError> {
        self.advance(PipelineEvent::InfraFailure { reason: reason.clone() })?;
        self.failed(OutcomeStatus::FailedInfra, cause, reason)
    }

    fn drive(&mut self) -> Result<TranslationOutcome, PipelineError> {
        let task = self.task;
        let deps = self.deps;
        let target = task.target_lang.as_str();

        let toolchain = match deps.toolchains.get(target) {
            Some(tc) if self.bench.has_toolchain(tc) => tc,
            Some(tc) => {
                let program = tc.compile_command.first().cloned().unwrap_or_default();
                return self.fail_infra(FailureCause::ToolchainMissing, format!("`{program}` for {target} is not installed"));
            }
            None => return self.fail_infra(FailureCause::ToolchainMissing, format!("no toolchain configured for {target}")),
        };
        let ranked = match deps.registry.rank_models(&task.source_lang, target, deps.registry.len().max(1)) {
            Ok(r) => r,
            Err(e) => return self.fail_infra(FailureCause::NoCandidate, e.to_string()),
        };
        let agents = deps.agents_for(task.convergence);
        let pair = pair_key(&task.source_lang, target);
        let default_lint = LintRules::default();
        let lint_rules = deps.lint_rules.get(&pair).unwrap_or(&default_lint);
        let shots = deps.few_shots.get(&pair).map_or(&[][..], Vec::as_slice);
        let prompt_task = PromptTask {
            source_lang: &task.source_lang,
            target_lang: target,
            source_code: &task.source_code,
        };

        let blueprint = if agents.contains(&AgentKind::ConceptVerifier) {
            let mut bridge = AgentBridge {
                model_id: deps.agent_model_or(&ranked[0]),
                run: self,
                fatal: None,
            };
            let bp = explain_concepts(&task.source_code, &task.source_lang, &deps.vocabulary, &mut bridge);
            if let Some(e) = bridge.fatal {
                return Err(e);
            }
            bp.ok()
        } else {
            None
        };

        let mut action = DirectorAction::select_model(ranked[0].clone());
        self.select(&ranked[0])?;
        let mut hints: Vec<Hint> = Vec::new();
        let mut diagnostics: Vec<Diagnostic> = Vec::new();
        loop {
            let model = self.state.current_model.clone().expect("a model is selected before translating");
            let attempt = self.state.attempt_no;

            let previous = self
                .state
                .last_output
                .clone()
                .filter(|_| action.kind == ActionKind::Refine && !(hints.is_empty() && diagnostics.is_empty()));
            let (purpose, messages, template) = match &previous {
                Some(prev) => (
                    "REFINE",
                    build_refinement_prompt(&prompt_task, prev, &hints, &diagnostics, &deps.refinement_template)?,
                    &deps.refinement_template,
                ),
                None => (
                    "TRANSLATE",
                    build_translation_prompt(&prompt_task, blueprint.as_ref(), shots, deps.shot_cap, &deps.translation_template)?,
                    &deps.translation_template,
                ),
            };
            let response = match self.call(purpose, &model, messages, Some(&template.template_id)) {
                Ok(r) => r,
                Err(CallError::Gateway(e)) => return self.fail_infra(FailureCause::Backend, e.to_string()),
                Err(CallError::Fatal(e)) => return Err(e),
            };

            let (observation, converged) = match extract_code_block(&response.content, target) {
                Err(_) => {
                    let hint = Hint {
                        kind: HintKind::Style,
                        message: NO_CODE_HINT.into(),
                        polarity: Polarity::Instruction,
                        snippet: None,
                    };
                    self.advance(PipelineEvent::LlmResponse {
                        code: None,
                        hint: Some(hint),
                    })?;
                    hints = self.state.pending_hints.clone();
                    diagnostics.clear();
                    (COMPILE_ERR, false)
                }
                Ok(code) => {
                    self.advance(PipelineEvent::LlmResponse {
                        code: Some(code.clone()),
                        hint: None,
                    })?;

                    let verdicts = if agents.is_empty() {
                        Vec::new()
                    } else {
                        let ctx = AgentContext {
                            source_lang: &task.source_lang,
                            target_lang: target,
                            source_code: &task.source_code,
                            translated_code: &code,
                            blueprint: blueprint.as_ref(),
                            fact_base: deps.fact_bases.get(target),
                            lint_rules,
                        };
                        let mut bridge = AgentBridge {
                            model_id: deps.agent_model_or(&model),
                            run: self,
                            fatal: None,
                        };
                        let verdicts = run_agents(&ctx, &agents, &mut bridge);
                        if let Some(e) = bridge.fatal {
                            return Err(e);
                        }
                        verdicts.expect("agent list is non-empty")
                    };
                    for v in &verdicts {
                        self.emit(EventBody::AgentVerdict(VerdictPayload {
                            attempt_no: attempt,
                            verdict: v.clone(),
                        }))?;
                    }
                    self.advance(PipelineEvent::AgentsCompleted)?;

                    let result = match self.bench.compile(&code, toolchain) {
                        Ok(r) => r,
                        Err(e) => return Err(divergence(self.next_seq(), e)),
                    };
                    self.emit(EventBody::CompileResult(CompilePayload {
                        attempt_no: attempt,
                        result: result.clone(),
                    }))?;
                    if result.status == CompileStatus::ToolMissing {
                        return self.fail_infra(FailureCause::Toolchain, format!("{target} toolchain disappeared"));
                    }
                    let compiled = result.status == CompileStatus::Ok;

                    let tests = if compiled && task.convergence == Convergence::CompileAgentsTests {
                        let generated = verdicts
                            .iter()
                            .find(|v| v.agent_kind == AgentKind::TestGenerator)
                            .map(|v| v.payload.clone())
                            .filter(|p| !p.trim().is_empty() && !p.starts_with(AGENT_ERROR_PREFIX));
                        let (report, executed) = match generated {
                            Some(tests) => match self.bench.run_tests(&code, &tests, toolchain) {
                                Ok(r) => (r, true),
                                Err(e) => return Err(divergence(self.next_seq(), e)),
                            },
                            None => (
                                TestReport {
                                    status: TestStatus::RunError,
                                    passed: 0,
                                    failed: 0,
                                    raw_output: "no tests were generated".into(),
                                },
                                false,
                            ),
                        };
                        self.emit(EventBody::TestReport(TestPayload {
                            attempt_no: attempt,
                            executed,
                            report: report.clone(),
                        }))?;
                        Some(report)
                    } else {
                        None
                    };

                    let mut new_hints = crate::prompt::derive_hints(&result.diagnostics, &verdicts);
                    if let Some(report) = tests.as_ref().filter(|r| r.status != TestStatus::AllPass) {
                        new_hints.push(test_hint(report));
                    }
                    let verdict = observe(task.convergence, compiled, tests.as_ref(), agents_pass(&verdicts));
                    self.advance(PipelineEvent::CompileCompleted { hints: new_hints })?;
                    // Compiler errors reach the prompt as the diagnostics list.
                    hints = self
                        .state
                        .pending_hints
                        .iter()
                        .filter(|h| h.kind != HintKind::CompilerDirected)
                        .cloned()
                        .collect();
                    diagnostics = result.diagnostics;
                    verdict
                }
            };

            let observation = Observation::new(observation);
            let suggestion = Suggestion::none();
            let belief = match belief_update(
                &self.state.belief,
                &action,
                &observation,
                &suggestion,
                &deps.filter.observation_model,
                &deps.filter.transition_model,
            ) {
                Ok(b) => b,
                Err(e) => return self.fail_infra(FailureCause::Filter, e.to_string()),
            };
            debug!(task = %task.task_id, attempt, observation = %observation.kind, belief = ?belief.probs(), "belief updated");
            self.emit(EventBody::BeliefUpdated(BeliefPayload {
                step: belief.step(),
                action: action.clone(),
                observation,
                suggestion,
                belief: belief.space().states().iter().cloned().zip(belief.probs().iter().copied()).collect(),
            }))?;
            self.advance(PipelineEvent::BeliefUpdated { belief: belief.clone() })?;

            let left = self.state.attempts_left();
            // A converged result stays acceptable on the last attempt.
            let budget = if converged { left.max(1) } else { left };
            let mut next = select_action(
                &belief,
                &deps.filter.policy,
                &ranked,
                budget,
                self.state.current_model.as_deref(),
                &self.state.used_models,
            );
            if next.kind == ActionKind::Accept && !converged {
                next = DirectorAction::refine();
            }
            if left == 0 && matches!(next.kind, ActionKind::Refine | ActionKind::Reselect) {
                next = DirectorAction::abort();
            }
            info!(task = %task.task_id, attempt, action = %next, "action chosen");
            self.emit(EventBody::ActionChosen(ActionPayload {
                action: next.clone(),
                attempt_no: attempt,
                attempts_left: left,
                converged,
            }))?;
            self.advance(PipelineEvent::ActionChosen { action: next.clone() })?;

            match next.kind {
                ActionKind::Accept => {
                    let code = self.state.last_output.clone().expect("DONE implies output");
                    self.emit(EventBody::TaskDone(DonePayload {
                        final_code: code.clone(),
                        attempts_used: attempt,
                        model_id: model,
                    }))?;
                    return Ok(self.outcome(OutcomeStatus::Success, Some(code), None));
                }
                ActionKind::Abort if left == 0 => {
                    let reason = format!("attempt budget of {} exhausted", task.max_attempts);
                    return self.failed(OutcomeStatus::FailedBudget, FailureCause::Budget, reason);
                }
                ActionKind::Abort => {
                    let reason = format!(
                        "director aborted with {} attempt(s) left, belief {:?}",
                        left,
                        belief.probs()
                    );
                    return self.failed(OutcomeStatus::FailedAbort, FailureCause::Abort, reason);
                }
                ActionKind::Reselect => {
                    let model_id = next.model_id.clone().expect("RESELECT names a model");
                    self.select(&model_id)?;
                }
                ActionKind::Refine | ActionKind::SelectModel => {}
            }
            action = next;
        }
    }
}

/// Runs `task` to a terminal phase, appending every interaction to `ledger`.
///
/// Infrastructure problems end the task with FAILED_INFRA; `Err` is reserved for
/// invalid tasks, ledger I/O, template errors and replay divergence.
pub fn translate(
    task: &TranslationTask,
    deps: &EngineDeps,
    bench: &mut dyn Workbench,
    ledger: &mut Ledger,
) -> Result<TranslationOutcome, PipelineError> {
    task.validate()?;
    let mut run = Run {
        task,
        deps,
        bench,
        ledger,
        requests: 0,
        state: PipelineState::new(deps.filter.prior.clone(), task.max_attempts),
    };
    run.emit(EventBody::TaskStart(task.clone()))?;
    run.advance(PipelineEvent::Start)?;
    run.drive()
}

/// Re-runs the decision logic of a recorded task against recorded model responses,
/// compile results and test reports. With `verify`, every recomputed MODEL_SELECTED,
/// BELIEF_UPDATED and ACTION_CHOSEN must equal the recorded one.
pub fn replay(ledger_path: &Path, deps: &EngineDeps, verify: bool) -> Result<TranslationOutcome, PipelineError> {
    let recorded = read_ledger(ledger_path)?;
    let EventBody::TaskStart(task) = &recorded[0].body else {
        unreachable!("read_ledger checks the first event");
    };
    let mut bench = ReplayWorkbench::from_events(&recorded);
    let mut ledger = Ledger::in_memory(task.task_id.clone());
    if verify {
        ledger = ledger.verify_against(&recorded);
    }
    let mut outcome = translate(task, deps, &mut bench, &mut ledger)?;
    ledger.finish()?;
    outcome.ledger_path = Some(ledger_path.to_path_buf());
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_priority() {
        let report = |status| TestReport {
            status,
            passed: 1,
            failed: 0,
            raw_output: String::new(),
        };
        let pass = report(TestStatus::AllPass);
        let fail = report(TestStatus::SomeFail);
        use Convergence::*;
        assert_eq!(observe(CompileAgentsTests, false, Some(&fail), false), (COMPILE_ERR, false));
        assert_eq!(observe(CompileAgentsTests, true, Some(&fail), false), (TESTS_FAIL, false));
        assert_eq!(observe(CompileAgentsTests, true, None, true), (TESTS_FAIL, false));
        assert_eq!(observe(CompileAgentsTests, true, Some(&pass), false), (AGENTS_FAIL, false));
        assert_eq!(observe(CompileAgentsTests, true, Some(&pass), true), (TESTS_PASS, true));
        assert_eq!(observe(CompileAndAgents, true, None, false), (AGENTS_FAIL, false));
        assert_eq!(observe(CompileAndAgents, true, None, true), (AGENTS_PASS, true));
        assert_eq!(observe(CompileOnly, true, None, false), (COMPILE_OK, true));
        assert_eq!(observe(CompileOnly, false, None, true), (COMPILE_ERR, false));
    }
}
