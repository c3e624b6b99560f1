//! Turning raw toolchain output into [`Diagnostic`]s.
//!
//! Parsers are keyed by id: `gcc-style` (`file:line:col: severity: message`, also
//! used by clang, go vet and many others), `python` (py_compile / traceback output)
//! and `generic`. Every parser falls back to wrapping unmatched lines that mention
//! "error" as line-0 ERROR diagnostics.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::CompilerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    /// 1-based; 0 when unknown.
    pub line: u32,
    pub column: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn location(&self) -> String {
        match (self.line, self.column) {
            (0, _) if self.file.is_empty() => "<unknown>".to_string(),
            (0, _) => self.file.clone(),
            (l, 0) => format!("{}:{l}", self.file),
            (l, c) => format!("{}:{l}:{c}", self.file),
        }
    }
}

pub const GCC_STYLE: &str = "gcc-style";
pub const PYTHON: &str = "python";
pub const GENERIC: &str = "generic";

pub fn known_parsers() -> &'static [&'static str] {
    &[GCC_STYLE, PYTHON, GENERIC]
}

pub fn parse_diagnostics(raw: &str, parser_id: &str) -> Result<Vec<Diagnostic>, CompilerError> {
    match parser_id {
        GCC_STYLE => Ok(parse_gcc_style(raw)),
        PYTHON => Ok(parse_python(raw)),
        GENERIC => Ok(raw.lines().filter_map(fallback).collect()),
        other => Err(CompilerError::UnknownParser(other.to_string())),
    }
}

fn fallback(line: &str) -> Option<Diagnostic> {
    let trimmed = line.trim();
    if trimmed.to_ascii_lowercase().contains("error") {
        Some(Diagnostic {
            severity: Severity::Error,
            file: String::new(),
            line: 0,
            column: 0,
            code: None,
            message: trimmed.to_string(),
        })
    } else {
        None
    }
}

fn severity_of(word: &str) -> Severity {
    match word {
        "warning" => Severity::Warning,
        "note" | "info" | "help" => Severity::Note,
        _ => Severity::Error,
    }
}

fn gcc_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<file>[^:\s][^:]*?):(?P<line>\d+)(?::(?P<col>\d+))?:\s*(?P<sev>fatal error|error|warning|note|info|help):\s*(?P<msg>.*?)\s*$",
        )
        .expect("valid regex")
    })
}

fn flag_code_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*\[(?P<code>-W[^\]]+|[A-Z]+\d+)\]$").expect("valid regex"))
}

fn parse_gcc_style(raw: &str) -> Vec<Diagnostic> {
    raw.lines()
        .filter_map(|line| {
            let Some(caps) = gcc_regex().captures(line) else {
                return fallback(line);
            };
            let mut message = caps["msg"].to_string();
            let found = flag_code_regex()
                .captures(&message)
                .map(|c| (c["code"].to_string(), c.get(0).map_or(0, |m| m.start())));
            let code = found.map(|(code, start)| {
                message.truncate(start);
                code
            });
            if message.is_empty() {
                return None;
            }
            Some(Diagnostic {
                severity: severity_of(&caps["sev"]),
                file: caps["file"].to_string(),
                line: caps["line"].parse().unwrap_or(0),
                column: caps
                    .name("col")
                    .and_then(|c| c.as_str().parse().ok())
                    .unwrap_or(0),
                code,
                message,
            })
        })
        .collect()
}

fn python_location_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"^\s*File "(?P<file>[^"]+)", line (?P<line>\d+)"#).expect("valid regex")
    })
}

fn python_error_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:Sorry: )?(?P<kind>[A-Za-z_][A-Za-z0-9_.]*(?:Error|Exception)):\s*(?P<msg>.*)$")
            .expect("valid regex")
    })
}

/// Python reports the location (`File "x", line N`) on an earlier line than the error
/// itself, so the last location seen is attached to the next error line.
fn parse_python(raw: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut location: Option<(String, u32)> = None;
    for line in raw.lines() {
        if let Some(caps) = python_location_regex().captures(line) {
            location = Some((caps["file"].to_string(), caps["line"].parse().unwrap_or(0)));
            continue;
        }
        if let Some(caps) = python_error_regex().captures(line.trim_end()) {
            let (file, line_no) = location.take().unwrap_or_default();
            let msg = caps["msg"].trim();
            out.push(Diagnostic {
                severity: Severity::Error,
                file,
                line: line_no,
                column: 0,
                code: Some(caps["kind"].to_string()),
                message: if msg.is_empty() {
                    caps["kind"].to_string()
                } else {
                    msg.to_string()
                },
            });
            continue;
        }
        if location.is_none() {
            if let Some(d) = fallback(line) {
                out.push(d);
            }
        }
    }
    out
}
