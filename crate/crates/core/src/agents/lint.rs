//! Rule-based checks for common translation artifacts: source syntax leaking into
//! the target, dropped logic, and source APIs with no target equivalent.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentKind, AgentVerdict, Hint, HintKind, Polarity};
use crate::lexer::{syntax_or_generic, tokenize, Syntax, TokenKind};

fn default_ratio() -> f64 {
    0.5
}

/// Lint rules for one source/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LintRules {
    /// Source-only keywords that must not appear as tokens of the translation.
    #[serde(default)]
    pub leak_keywords: Vec<String>,
    /// Source identifiers that signal a mistranslated API, with the reason shown to the model.
    #[serde(default)]
    pub api_deny: BTreeMap<String, String>,
    #[serde(default = "default_ratio")]
    pub ratio_min: f64,
}

impl Default for LintRules {
    fn default() -> Self {
        Self {
            leak_keywords: Vec::new(),
            api_deny: BTreeMap::new(),
            ratio_min: default_ratio(),
        }
    }
}

impl LintRules {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.ratio_min) {
            return Err(AgentError::InvalidLintRules(format!("ratio_min {} outside [0, 1]", self.ratio_min)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let rules: Self = serde_json::from_str(text).map_err(|e| AgentError::InvalidLintRules(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::InvalidLintRules(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

const IMPORT_PREFIXES: &[&str] = &[
    "import ", "#include", "#import", "package ", "use ", "using ", "pragma ", "#pragma",
];

fn is_import(line: &str) -> bool {
    IMPORT_PREFIXES.iter().any(|p| line.starts_with(p))
        || (line.starts_with("from ") && line.contains(" import "))
}

fn is_punctuation_only(line: &str) -> bool {
    line.chars().all(|c| c.is_whitespace() || "{}()[];,".contains(c))
}

/// Logical statements, counted per line: blank lines, comments, imports and lines of
/// pure bracket punctuation are not counted.
pub fn statement_count(code: &str, lang: &str) -> usize {
    count_with(code, syntax_or_generic(lang))
}

fn count_with(code: &str, syntax: &Syntax) -> usize {
    let mut in_block = false;
    let mut count = 0;
    for raw in code.lines() {
        let mut line = raw.trim();
        if let Some((open, close)) = syntax.block_comment {
            loop {
                if in_block {
                    match line.find(close) {
                        Some(end) => {
                            line = line[end + close.len()..].trim();
                            in_block = false;
                        }
                        None => {
                            line = "";
                            break;
                        }
                    }
                } else if let Some(rest) = line.strip_prefix(open) {
                    in_block = true;
                    line = rest;
                } else {
                    break;
                }
            }
        }
        if line.is_empty()
            || syntax.line_comments.iter().any(|c| line.starts_with(c))
            || is_import(line)
            || is_punctuation_only(line)
        {
            continue;
        }
        count += 1;
    }
    count
}

fn line_of(code: &str, line: u32) -> Option<String> {
    code.lines()
        .nth(line.saturating_sub(1) as usize)
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
}

/// Runs the leak, dropped-logic and API rules. FAIL iff any rule fires; every finding
/// becomes a NEGATIVE_EXAMPLE hint.
pub fn lint_translation(
    source_code: &str,
    translated_code: &str,
    source_lang: &str,
    target_lang: &str,
    rules: &LintRules,
) -> Result<AgentVerdict, AgentError> {
    if source_code.trim().is_empty() || translated_code.trim().is_empty() {
        return Err(AgentError::EmptyInput("lint needs both source and translation"));
    }
    let tokens = tokenize(translated_code, syntax_or_generic(target_lang));
    let mut hints = Vec::new();
    let mut reported = Vec::<&str>::new();

    for tok in tokens.iter().filter(|t| t.kind != TokenKind::Str) {
        if rules.leak_keywords.iter().any(|k| k == &tok.text) && !reported.contains(&tok.text.as_str()) {
            reported.push(&tok.text);
            hints.push(Hint {
                kind: HintKind::SyntaxLeak,
                message: format!("`{}` is {source_lang} syntax and is not valid in {target_lang}", tok.text),
                polarity: Polarity::NegativeExample,
                snippet: line_of(translated_code, tok.line),
            });
        }
    }

    let source_statements = statement_count(source_code, source_lang);
    let translated_statements = statement_count(translated_code, target_lang);
    let floor = (rules.ratio_min * source_statements as f64).floor() as usize;
    if translated_statements < floor {
        hints.push(Hint {
            kind: HintKind::LogicRemoved,
            message: format!(
                "translation has {translated_statements} statements but the source has {source_statements}; logic may have been dropped"
            ),
            polarity: Polarity::NegativeExample,
            snippet: None,
        });
    }

    let mut denied = Vec::<&str>::new();
    for tok in tokens.iter().filter(|t| matches!(t.kind, TokenKind::Ident | TokenKind::Keyword)) {
        if let Some(reason) = rules.api_deny.get(&tok.text) {
            if !denied.contains(&tok.text.as_str()) {
                denied.push(&tok.text);
                hints.push(Hint {
                    kind: HintKind::ApiMismatch,
                    message: format!("`{}`: {reason}", tok.text),
                    polarity: Polarity::NegativeExample,
                    snippet: line_of(translated_code, tok.line),
                });
            }
        }
    }

    Ok(if hints.is_empty() {
        AgentVerdict::pass(AgentKind::ArtifactLinter, String::new())
    } else {
        AgentVerdict::fail(AgentKind::ArtifactLinter, hints, String::new())
    })
}
