//! Side-effecting services used by the driver: model calls, compilation and test runs.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use super::ledger::{EventBody, FailureCause, LedgerEvent};
use crate::compiler::{CompileResult, CompilerGarden, TestReport, ToolchainConfig};
use crate::gateway::{Backends, ChatRequest, ChatResponse, GatewayError};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    /// The recording cannot answer the request.
    #[error("replay: {0}")]
    Replay(String),
}

pub trait Workbench {
    fn has_toolchain(&mut self, cfg: &ToolchainConfig) -> bool;
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, WorkbenchError>;
    fn compile(&mut self, code: &str, cfg: &ToolchainConfig) -> Result<CompileResult, WorkbenchError>;
    fn run_tests(&mut self, program: &str, tests: &str, cfg: &ToolchainConfig) -> Result<TestReport, WorkbenchError>;
}

/// Real backends and toolchains. Requests are routed by the model's `backend_ref`.
pub struct LiveWorkbench<'a> {
    registry: &'a Registry,
    backends: Backends,
    garden: &'a dyn CompilerGarden,
}

impl<'a> LiveWorkbench<'a> {
    pub fn new(registry: &'a Registry, backends: Backends, garden: &'a dyn CompilerGarden) -> Self {
        Self {
            registry,
            backends,
            garden,
        }
    }
}

impl Workbench for LiveWorkbench<'_> {
    fn has_toolchain(&mut self, cfg: &ToolchainConfig) -> bool {
        self.garden.has_toolchain(cfg)
    }

    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, WorkbenchError> {
        let backend_ref = self
            .registry
            .get(&req.model_id)
            .map(|p| p.backend_ref.as_str())
            .ok_or_else(|| GatewayError::UnknownBackend(req.model_id.clone()))?;
        let backend = self
            .backends
            .get(backend_ref)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_ref.to_string()))?;
        Ok(backend.complete(req)?)
    }

    fn compile(&mut self, code: &str, cfg: &ToolchainConfig) -> Result<CompileResult, WorkbenchError> {
        Ok(self.garden.compile(code, cfg))
    }

    fn run_tests(&mut self, program: &str, tests: &str, cfg: &ToolchainConfig) -> Result<TestReport, WorkbenchError> {
        Ok(self.garden.run_tests(program, tests, cfg))
    }
}

/// Answers from a recorded ledger. Model calls are matched by request id; compile and
/// test results are handed out in recorded order.
#[derive(Debug, Default)]
pub struct ReplayWorkbench {
    /// `None` marks a request that was sent but never answered.
    responses: BTreeMap<String, Option<ChatResponse>>,
    models: BTreeMap<String, String>,
    compiles: VecDeque<CompileResult>,
    tests: VecDeque<TestReport>,
    toolchain_missing: bool,
}

impl ReplayWorkbench {
    pub fn from_events(events: &[LedgerEvent]) -> Self {
        let mut out = Self::default();
        for event in events {
            match &event.body {
                EventBody::PromptBuilt(p) => {
                    out.responses.insert(p.request_id.clone(), None);
                    out.models.insert(p.request_id.clone(), p.model_id.clone());
                }
                EventBody::LlmResponse(r) => {
                    out.responses.insert(
                        r.request_id.clone(),
                        Some(ChatResponse {
                            request_id: r.request_id.clone(),
                            content: r.content.clone(),
                            finish_reason: r.finish_reason,
                            latency_ms: r.latency_ms,
                            token_counts: r.token_counts,
                        }),
                    );
                }
                EventBody::CompileResult(c) => out.compiles.push_back(c.result.clone()),
                EventBody::TestReport(t) if t.executed => out.tests.push_back(t.report.clone()),
                EventBody::TaskFailed(f) => out.toolchain_missing = f.cause == FailureCause::ToolchainMissing,
                _ => {}
            }
        }
        out
    }
}

impl Workbench for ReplayWorkbench {
    fn has_toolchain(&mut self, _cfg: &ToolchainConfig) -> bool {
        !self.toolchain_missing
    }

    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, WorkbenchError> {
        let recorded = self
            .responses
            .remove(&req.request_id)
            .ok_or_else(|| WorkbenchError::Replay(format!("request {} was not recorded", req.request_id)))?;
        if self.models.get(&req.request_id) != Some(&req.model_id) {
            return Err(WorkbenchError::Replay(format!(
                "request {} went to a different model",
                req.request_id
            )));
        }
        recorded.ok_or_else(|| {
            WorkbenchError::Gateway(GatewayError::Transport {
                request_id: req.request_id.clone(),
                attempts: 0,
                message: "request failed in the recorded run".into(),
            })
        })
    }

    fn compile(&mut self, _code: &str, _cfg: &ToolchainConfig) -> Result<CompileResult, WorkbenchError> {
        self.compiles
            .pop_front()
            .ok_or_else(|| WorkbenchError::Replay("no further compile results recorded".into()))
    }

    fn run_tests(&mut self, _program: &str, _tests: &str, _cfg: &ToolchainConfig) -> Result<TestReport, WorkbenchError> {
        self.tests
            .pop_front()
            .ok_or_else(|| WorkbenchError::Replay("no further test reports recorded".into()))
    }
}
