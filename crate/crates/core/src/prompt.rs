//! Prompt assembly for first translations and refinements.
//!
//! Templates are plain text with `{{SLOT}}` markers plus a JSON sidecar carrying the
//! template id and the system-message header.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentVerdict, ConceptBlueprint, Hint, HintKind, Polarity, Verdict};
use crate::compiler::{Diagnostic, Severity};
use crate::gateway::ChatMessage;

pub const DEFAULT_SHOT_CAP: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template `{template}` uses unknown slot `{slot}`")]
    UnknownSlot { template: String, slot: String },
    #[error("template `{template}`: {message}")]
    SlotMismatch { template: String, message: String },
    #[error("few-shot example is for {found} but the task is {expected}")]
    ShotLanguageMismatch { expected: String, found: String },
    #[error("invalid few-shot example: {0}")]
    InvalidShot(String),
    #[error("refinement needs a previous output")]
    MissingPreviousOutput,
    #[error("refinement needs at least one hint or diagnostic")]
    EmptyFeedback,
    #[error("cannot load {path}: {message}")]
    Load { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    SourceLang,
    TargetLang,
    SourceCode,
    Blueprint,
    Hints,
    FewShots,
    PreviousOutput,
}

impl Slot {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "SOURCE_LANG" => Self::SourceLang,
            "TARGET_LANG" => Self::TargetLang,
            "SOURCE_CODE" => Self::SourceCode,
            "BLUEPRINT" => Self::Blueprint,
            "HINTS" => Self::Hints,
            "FEW_SHOTS" => Self::FewShots,
            "PREVIOUS_OUTPUT" => Self::PreviousOutput,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_]+)\s*\}\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub role_header: String,
    body: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    template_id: String,
    role_header: String,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, role_header: impl Into<String>, body: impl Into<String>) -> Result<Self, PromptError> {
        let template_id = template_id.into();
        let body = body.into();
        let mut segments = Vec::new();
        let mut last = 0;
        for caps in slot_regex().captures_iter(&body) {
            let whole = caps.get(0).expect("match");
            let slot = Slot::parse(&caps[1]).ok_or_else(|| PromptError::UnknownSlot {
                template: template_id.clone(),
                slot: caps[1].to_string(),
            })?;
            if whole.start() > last {
                segments.push(Segment::Text(body[last..whole.start()].to_string()));
            }
            segments.push(Segment::Slot(slot));
            last = whole.end();
        }
        if last < body.len() {
            segments.push(Segment::Text(body[last..].to_string()));
        }
        Ok(Self {
            template_id,
            role_header: role_header.into(),
            body,
            segments,
        })
    }

    /// Reads `<path>` as the body and `<path>` with a `.json` extension as the sidecar.
    pub fn load(body_path: &Path) -> Result<Self, PromptError> {
        let load_err = |path: &Path, message: String| PromptError::Load {
            path: path.to_path_buf(),
            message,
        };
        let sidecar_path = body_path.with_extension("json");
        let body = std::fs::read_to_string(body_path).map_err(|e| load_err(body_path, e.to_string()))?;
        let sidecar = std::fs::read_to_string(&sidecar_path).map_err(|e| load_err(&sidecar_path, e.to_string()))?;
        let sidecar: Sidecar = serde_json::from_str(&sidecar).map_err(|e| load_err(&sidecar_path, e.to_string()))?;
        Self::new(sidecar.template_id, sidecar.role_header, body)
    }

    pub fn default_translation() -> Self {
        Self::new(
            "translate-default",
            "You are an expert software engineer who translates programs between languages faithfully.",
            include_str!("../templates/translate.txt"),
        )
        .expect("bundled template is valid")
    }

    pub fn default_refinement() -> Self {
        Self::new(
            "refine-default",
            "You are an expert software engineer who repairs translated programs using reviewer and compiler feedback.",
            include_str!("../templates/refine.txt"),
        )
        .expect("bundled template is valid")
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn uses(&self, slot: Slot) -> bool {
        self.segments.contains(&Segment::Slot(slot))
    }

    fn mismatch(&self, message: &str) -> PromptError {
        PromptError::SlotMismatch {
            template: self.template_id.clone(),
            message: message.to_string(),
        }
    }

    pub fn check_translation(&self) -> Result<(), PromptError> {
        if !self.uses(Slot::SourceCode) {
            return Err(self.mismatch("translation templates must use SOURCE_CODE"));
        }
        if self.uses(Slot::Hints) || self.uses(Slot::PreviousOutput) {
            return Err(self.mismatch("first-attempt translation templates cannot use HINTS or PREVIOUS_OUTPUT"));
        }
        Ok(())
    }

    pub fn check_refinement(&self) -> Result<(), PromptError> {
        if !(self.uses(Slot::PreviousOutput) && self.uses(Slot::Hints)) {
            return Err(self.mismatch("refinement templates must use PREVIOUS_OUTPUT and HINTS"));
        }
        Ok(())
    }

    fn render(&self, fill: impl Fn(Slot) -> String) -> String {
        let mut out = String::with_capacity(self.body.len());
        for segment in &self.segments {
            match segment {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(s) => out.push_str(&fill(*s)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub source_lang: String,
    pub target_lang: String,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Reads a JSON list of examples for one language pair.
pub fn load_few_shots(path: &Path) -> Result<Vec<FewShotExample>, PromptError> {
    let load_err = |message: String| PromptError::Load {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    let shots: Vec<FewShotExample> = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
    for shot in &shots {
        if shot.source.trim().is_empty() || shot.target.trim().is_empty() {
            return Err(PromptError::InvalidShot("source and target must be non-empty".into()));
        }
    }
    Ok(shots)
}

/// The parts of a translation task prompts are built from.
#[derive(Debug, Clone, Copy)]
pub struct PromptTask<'a> {
    pub source_lang: &'a str,
    pub target_lang: &'a str,
    pub source_code: &'a str,
}

fn render_shots(shots: &[FewShotExample]) -> String {
    let mut out = String::new();
    for (i, shot) in shots.iter().enumerate() {
        let _ = write!(
            out,
            "Example {}:\n```{}\n{}\n```\nbecomes\n```{}\n{}\n```\n",
            i + 1,
            shot.source_lang,
            shot.source.trim_end(),
            shot.target_lang,
            shot.target.trim_end()
        );
        if let Some(note) = &shot.note {
            let _ = writeln!(out, "Note: {note}");
        }
        out.push('\n');
    }
    out
}

fn common_slot(slot: Slot, task: &PromptTask<'_>) -> Option<String> {
    Some(match slot {
        Slot::SourceLang => task.source_lang.to_string(),
        Slot::TargetLang => task.target_lang.to_string(),
        Slot::SourceCode => task.source_code.to_string(),
        _ => return None,
    })
}

pub fn build_translation_prompt(
    task: &PromptTask<'_>,
    blueprint: Option<&ConceptBlueprint>,
    shots: &[FewShotExample],
    shot_cap: usize,
    tmpl: &PromptTemplate,
) -> Result<Vec<ChatMessage>, PromptError> {
    tmpl.check_translation()?;
    for shot in shots {
        if shot.source_lang != task.source_lang || shot.target_lang != task.target_lang {
            return Err(PromptError::ShotLanguageMismatch {
                expected: format!("{}->{}", task.source_lang, task.target_lang),
                found: format!("{}->{}", shot.source_lang, shot.target_lang),
            });
        }
    }
    let shots = &shots[..shots.len().min(shot_cap)];
    let body = tmpl.render(|slot| {
        common_slot(slot, task).unwrap_or_else(|| match slot {
            Slot::Blueprint => blueprint.map(ConceptBlueprint::render).unwrap_or_default(),
            Slot::FewShots => render_shots(shots),
            _ => String::new(),
        })
    });
    Ok(vec![ChatMessage::system(tmpl.role_header.clone()), ChatMessage::user(body)])
}

fn polarity_heading(p: Polarity) -> &'static str {
    match p {
        Polarity::PositiveExample => "Do this:",
        Polarity::NegativeExample => "Avoid this:",
        Polarity::Instruction => "Instructions:",
    }
}

fn severity_word(s: Severity) -> &'static str {
    match s {
        Severity::Error => "ERROR",
        Severity::Warning => "WARNING",
        Severity::Note => "NOTE",
    }
}

/// Hints grouped positive, negative, then instructions; diagnostics as a numbered list.
pub fn render_feedback(hints: &[Hint], diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for polarity in [Polarity::PositiveExample, Polarity::NegativeExample, Polarity::Instruction] {
        let group: Vec<&Hint> = hints.iter().filter(|h| h.polarity == polarity).collect();
        if group.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{}", polarity_heading(polarity));
        for hint in group {
            let _ = writeln!(out, "- [{}] {}", hint.kind.as_str(), hint.message);
            if let Some(snippet) = &hint.snippet {
                let _ = writeln!(out, "  `{snippet}`");
            }
        }
        out.push('\n');
    }
    if !diagnostics.is_empty() {
        let _ = writeln!(out, "Compiler diagnostics:");
        for (i, d) in diagnostics.iter().enumerate() {
            let _ = writeln!(out, "{}. {} {}: {}", i + 1, severity_word(d.severity), d.location(), d.message);
        }
    }
    out.trim_end().to_string()
}

pub fn build_refinement_prompt(
    task: &PromptTask<'_>,
    previous_output: &str,
    hints: &[Hint],
    diagnostics: &[Diagnostic],
    tmpl: &PromptTemplate,
) -> Result<Vec<ChatMessage>, PromptError> {
    tmpl.check_refinement()?;
    if previous_output.trim().is_empty() {
        return Err(PromptError::MissingPreviousOutput);
    }
    if hints.is_empty() && diagnostics.is_empty() {
        return Err(PromptError::EmptyFeedback);
    }
    let feedback = render_feedback(hints, diagnostics);
    let body = tmpl.render(|slot| {
        common_slot(slot, task).unwrap_or_else(|| match slot {
            Slot::Hints => feedback.clone(),
            Slot::PreviousOutput => previous_output.to_string(),
            _ => String::new(),
        })
    });
    Ok(vec![ChatMessage::system(tmpl.role_header.clone()), ChatMessage::user(body)])
}

/// Compiler errors first, then hints carried by failing verdicts, without repeated
/// (kind, message) pairs.
pub fn derive_hints(diagnostics: &[Diagnostic], verdicts: &[AgentVerdict]) -> Vec<Hint> {
    let compiler = diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| Hint {
            kind: HintKind::CompilerDirected,
            message: format!("fix {}: {}", d.location(), d.message),
            polarity: Polarity::Instruction,
            snippet: None,
        });
    let agents = verdicts
        .iter()
        .filter(|v| v.verdict == Verdict::Fail)
        .flat_map(|v| v.hints.iter().cloned());
    let mut seen = HashSet::new();
    compiler
        .chain(agents)
        .filter(|h| seen.insert((h.kind, h.message.clone())))
        .collect()
}
