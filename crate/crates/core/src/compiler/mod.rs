//! Per-language toolchains: compiling candidate translations and running generated
//! tests, with raw tool output turned into structured diagnostics.

mod diagnostics;
mod exec;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{self, LanguageId};
use crate::sync::Limiter;

pub use diagnostics::{known_parsers, parse_diagnostics, Diagnostic, Severity, GCC_STYLE, GENERIC, PYTHON};

#[derive(Debug, Error)]
pub enum CompilerError {
    #[error("unknown diagnostic parser `{0}`")]
    UnknownParser(String),
    #[error("invalid toolchain config: {0}")]
    InvalidConfig(String),
    #[error("cannot read toolchain config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse toolchain config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn default_timeout() -> f64 {
    60.0
}

fn default_format() -> String {
    GCC_STYLE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainConfig {
    pub language: LanguageId,
    /// Argument vector; `{IN}`, `{OUT}` and `{DIR}` are substituted per invocation.
    pub compile_command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_command: Option<Vec<String>>,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_format")]
    pub diagnostic_format: String,
    /// Name the code is written under inside the work directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
}

impl ToolchainConfig {
    pub fn validate(&self) -> Result<(), CompilerError> {
        let invalid = |m: String| Err(CompilerError::InvalidConfig(m));
        if !lang::is_valid_id(&self.language) {
            return invalid(format!("bad language id `{}`", self.language));
        }
        if self.compile_command.is_empty() || self.compile_command[0].is_empty() {
            return invalid("compile_command is empty".into());
        }
        if matches!(&self.run_command, Some(r) if r.is_empty() || r[0].is_empty()) {
            return invalid("run_command is empty".into());
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return invalid(format!("timeout must be positive, got {}", self.timeout));
        }
        if !known_parsers().contains(&self.diagnostic_format.as_str()) {
            return Err(CompilerError::UnknownParser(self.diagnostic_format.clone()));
        }
        if let Some(name) = &self.source_file {
            if name.is_empty() || name.contains('/') || name == "." || name == ".." {
                return invalid(format!("source_file `{name}` must be a plain file name"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, CompilerError> {
        let text = std::fs::read_to_string(path).map_err(|source| CompilerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_json(&text).map_err(|source| CompilerError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }

    pub fn source_name(&self) -> String {
        self.source_file
            .clone()
            .unwrap_or_else(|| lang::default_source_file(&self.language))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CompileStatus {
    Ok,
    CompileError,
    Timeout,
    ToolMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub status: CompileStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub raw_output: String,
    pub duration_ms: u64,
}

impl CompileResult {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestStatus {
    AllPass,
    SomeFail,
    RunError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub status: TestStatus,
    pub passed: u32,
    pub failed: u32,
    pub raw_output: String,
}

/// Compiles code and runs tests for one language at a time.
pub trait CompilerGarden: Send + Sync {
    fn has_toolchain(&self, cfg: &ToolchainConfig) -> bool;
    fn compile(&self, code: &str, cfg: &ToolchainConfig) -> CompileResult;
    fn run_tests(&self, program: &str, tests: &str, cfg: &ToolchainConfig) -> TestReport;
}

fn global_limiter() -> Arc<Limiter> {
    static LIMITER: OnceLock<Arc<Limiter>> = OnceLock::new();
    LIMITER
        .get_or_init(|| {
            let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
            Arc::new(Limiter::new(cores))
        })
        .clone()
}

/// Runs real toolchains as child processes, each in a fresh temporary directory.
#[derive(Debug, Clone)]
pub struct ProcessGarden {
    keep_artifacts: bool,
    limiter: Arc<Limiter>,
}

impl Default for ProcessGarden {
    fn default() -> Self {
        Self::new(false)
    }
}

struct WorkDir {
    dir: Option<tempfile::TempDir>,
    keep: bool,
}

impl WorkDir {
    fn path(&self) -> &Path {
        self.dir.as_ref().expect("work dir alive").path()
    }
}

impl Drop for WorkDir {
    fn drop(&mut self) {
        if let (true, Some(dir)) = (self.keep, self.dir.take()) {
            let kept = dir.keep();
            tracing::info!(path = %kept.display(), "kept work directory");
        }
    }
}

struct Prepared {
    work: WorkDir,
    source: PathBuf,
}

impl ProcessGarden {
    pub fn new(keep_artifacts: bool) -> Self {
        Self {
            keep_artifacts,
            limiter: global_limiter(),
        }
    }

    pub fn with_limit(keep_artifacts: bool, max_processes: usize) -> Self {
        Self {
            keep_artifacts,
            limiter: Arc::new(Limiter::new(max_processes)),
        }
    }

    fn prepare(&self, code: &str, cfg: &ToolchainConfig) -> std::io::Result<Prepared> {
        let dir = tempfile::Builder::new().prefix("quorum-").tempdir()?;
        let source = dir.path().join(cfg.source_name());
        std::fs::write(&source, code)?;
        Ok(Prepared {
            work: WorkDir {
                dir: Some(dir),
                keep: self.keep_artifacts,
            },
            source,
        })
    }

    fn compile_in(&self, prepared: &Prepared, cfg: &ToolchainConfig) -> CompileResult {
        let argv = substitute(&cfg.compile_command, prepared);
        let _permit = self.limiter.acquire();
        let outcome = exec::run(&exec::Invocation {
            argv: &argv,
            dir: prepared.work.path(),
            timeout: cfg.timeout_duration(),
            deny_network: false,
        });
        let (outcome, elapsed) = match outcome {
            Ok(v) => v,
            Err(e) => {
                return CompileResult {
                    status: CompileStatus::ToolMissing,
                    diagnostics: Vec::new(),
                    raw_output: format!("failed to launch `{}`: {e}", argv[0]),
                    duration_ms: 0,
                }
            }
        };
        let duration_ms = elapsed.as_millis() as u64;
        let relative = |output: String| relative_to(output, prepared.work.path());
        match outcome {
            exec::Outcome::NotFound => CompileResult {
                status: CompileStatus::ToolMissing,
                diagnostics: Vec::new(),
                raw_output: format!("`{}` not found", argv[0]),
                duration_ms,
            },
            exec::Outcome::TimedOut { output } => CompileResult {
                status: CompileStatus::Timeout,
                diagnostics: Vec::new(),
                raw_output: relative(output),
                duration_ms,
            },
            exec::Outcome::Exited { code, output } => {
                let output = relative(output);
                let mut diagnostics =
                    parse_diagnostics(&output, &cfg.diagnostic_format).unwrap_or_default();
                let has_errors = diagnostics.iter().any(|d| d.severity == Severity::Error);
                let status = if code == Some(0) && !has_errors {
                    CompileStatus::Ok
                } else {
                    CompileStatus::CompileError
                };
                let mut raw_output = output;
                if status == CompileStatus::CompileError && !has_errors {
                    let line = match code {
                        Some(c) => format!("exit status {c}"),
                        None => "terminated by signal".to_string(),
                    };
                    if raw_output.trim().is_empty() {
                        raw_output = line.clone();
                    }
                    diagnostics.push(Diagnostic {
                        severity: Severity::Error,
                        file: String::new(),
                        line: 0,
                        column: 0,
                        code: None,
                        message: line,
                    });
                }
                CompileResult {
                    status,
                    diagnostics,
                    raw_output,
                    duration_ms,
                }
            }
        }
    }
}

/// Rewrites work-directory paths in tool output as relative ones.
fn relative_to(output: String, dir: &Path) -> String {
    let prefix = format!("{}{}", dir.display(), std::path::MAIN_SEPARATOR);
    if output.contains(&prefix) {
        output.replace(&prefix, "")
    } else {
        output
    }
}

fn substitute(template: &[String], prepared: &Prepared) -> Vec<String> {
    let dir = prepared.work.path();
    let input = prepared.source.to_string_lossy();
    let output = dir.join("out");
    let output = output.to_string_lossy();
    let dir = dir.to_string_lossy();
    template
        .iter()
        .map(|arg| {
            arg.replace("{IN}", &input)
                .replace("{OUT}", &output)
                .replace("{DIR}", &dir)
        })
        .collect()
}

fn protocol_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(PASS|FAIL)(?:\s+\S.*)?$").expect("valid regex"))
}

/// Counts `PASS <name>` / `FAIL <name>` lines.
pub fn count_protocol(output: &str) -> (u32, u32) {
    output
        .lines()
        .filter_map(|l| protocol_regex().captures(l.trim_end()))
        .fold((0, 0), |(p, f), c| {
            if &c[1] == "PASS" {
                (p + 1, f)
            } else {
                (p, f + 1)
            }
        })
}

/// Classifies a finished test run from its protocol counts and exit code.
pub fn classify_run(passed: u32, failed: u32, exit_code: Option<i32>) -> TestStatus {
    if failed > 0 {
        TestStatus::SomeFail
    } else if passed >= 1 && exit_code == Some(0) {
        TestStatus::AllPass
    } else {
        TestStatus::RunError
    }
}

impl CompilerGarden for ProcessGarden {
    fn has_toolchain(&self, cfg: &ToolchainConfig) -> bool {
        let run_ok = cfg
            .run_command
            .as_ref()
            .map_or(true, |r| r[0].contains('{') || exec::resolvable(&r[0]));
        exec::resolvable(&cfg.compile_command[0]) && run_ok
    }

    fn compile(&self, code: &str, cfg: &ToolchainConfig) -> CompileResult {
        match self.prepare(code, cfg) {
            Ok(prepared) => self.compile_in(&prepared, cfg),
            Err(e) => CompileResult {
                status: CompileStatus::ToolMissing,
                diagnostics: Vec::new(),
                raw_output: format!("cannot prepare work directory: {e}"),
                duration_ms: 0,
            },
        }
    }

    fn run_tests(&self, program: &str, tests: &str, cfg: &ToolchainConfig) -> TestReport {
        let run_error = |raw_output: String| TestReport {
            status: TestStatus::RunError,
            passed: 0,
            failed: 0,
            raw_output,
        };
        let Some(run_command) = &cfg.run_command else {
            return run_error("toolchain has no run_command".into());
        };
        let prepared = match self.prepare(&format!("{program}\n{tests}"), cfg) {
            Ok(p) => p,
            Err(e) => return run_error(format!("cannot prepare work directory: {e}")),
        };
        let compiled = self.compile_in(&prepared, cfg);
        match compiled.status {
            CompileStatus::Ok => {}
            CompileStatus::Timeout => {
                return TestReport {
                    status: TestStatus::Timeout,
                    passed: 0,
                    failed: 0,
                    raw_output: compiled.raw_output,
                }
            }
            _ => return run_error(compiled.raw_output),
        }
        let argv = substitute(run_command, &prepared);
        let _permit = self.limiter.acquire();
        let outcome = exec::run(&exec::Invocation {
            argv: &argv,
            dir: prepared.work.path(),
            timeout: cfg.timeout_duration(),
            deny_network: true,
        });
        match outcome {
            Err(e) => run_error(format!("failed to launch `{}`: {e}", argv[0])),
            Ok((exec::Outcome::NotFound, _)) => run_error(format!("`{}` not found", argv[0])),
            Ok((exec::Outcome::TimedOut { output }, _)) => {
                let (passed, failed) = count_protocol(&output);
                TestReport {
                    status: TestStatus::Timeout,
                    passed,
                    failed,
                    raw_output: relative_to(output, prepared.work.path()),
                }
            }
            Ok((exec::Outcome::Exited { code, output }, _)) => {
                let (passed, failed) = count_protocol(&output);
                TestReport {
                    status: classify_run(passed, failed, code),
                    passed,
                    failed,
                    raw_output: relative_to(output, prepared.work.path()),
                }
            }
        }
    }
}
