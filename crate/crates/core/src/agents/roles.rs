//! Model-backed agents. Each prompt starts with a `Task: ...` marker line so scripted
//! scenarios can route requests.

use std::sync::OnceLock;

use regex::Regex;

use super::{AgentContext, AgentError, AgentKind, AgentLlm, AgentVerdict, ConceptBlueprint, Hint, HintKind, Polarity, Verdict};
use crate::codeblock::fenced_blocks;
use crate::gateway::ChatMessage;

pub const EXPLAIN_TRANSLATION_MARKER: &str = "Task: explain-translation";
pub const VERIFY_CONCEPTS_MARKER: &str = "Task: verify-concepts";
pub const GENERATE_TESTS_MARKER: &str = "Task: generate-tests";

fn require_translation(ctx: &AgentContext<'_>) -> Result<(), AgentError> {
    if ctx.translated_code.trim().is_empty() {
        return Err(AgentError::EmptyInput("translated code"));
    }
    Ok(())
}

/// Plain-language explanation of the translated code, one declarative sentence per line.
pub fn explain_translation(ctx: &AgentContext<'_>, llm: &mut dyn AgentLlm) -> Result<String, AgentError> {
    require_translation(ctx)?;
    let target = ctx.target_lang;
    let messages = vec![
        ChatMessage::system(format!("You are an expert {target} reviewer.")),
        ChatMessage::user(format!(
            "{EXPLAIN_TRANSLATION_MARKER}\n\
             Explain what the following {target} code does and which {target} language features it relies on. \
             Write short declarative sentences, one per line.\n\n```{target}\n{}\n```",
            ctx.translated_code
        )),
    ];
    Ok(llm.ask(AgentKind::Explainer.as_str(), messages)?.trim().to_string())
}

fn verdict_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*verdict\s*:\s*(pass|fail)\b").expect("valid regex"))
}

fn hint_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*hint\s*:\s*(?:([A-Z_]+)\s*:\s*)?(.+?)\s*$").expect("valid regex"))
}

/// Reads `VERDICT: PASS|FAIL` and any `HINT: [KIND:] message` lines.
pub fn parse_concept_verdict(response: &str) -> (Option<Verdict>, Vec<Hint>) {
    let mut verdict = None;
    let mut hints = Vec::new();
    for line in response.lines() {
        if verdict.is_none() {
            if let Some(c) = verdict_regex().captures(line) {
                verdict = Some(if c[1].eq_ignore_ascii_case("pass") { Verdict::Pass } else { Verdict::Fail });
                continue;
            }
        }
        if let Some(c) = hint_regex().captures(line) {
            let (kind, message) = match c.get(1).and_then(|k| HintKind::parse(k.as_str())) {
                Some(kind) => (kind, c[2].to_string()),
                None => {
                    // An unrecognised prefix is part of the message.
                    let whole = line.trim();
                    let message = whole[whole.find(':').map_or(0, |i| i + 1)..].trim().to_string();
                    (HintKind::LogicRemoved, message)
                }
            };
            hints.push(Hint {
                kind,
                message,
                polarity: Polarity::Instruction,
                snippet: None,
            });
        }
    }
    (verdict, hints)
}

/// Checks that the translation still expresses the blueprint's concepts.
pub fn verify_concepts(
    ctx: &AgentContext<'_>,
    blueprint: &ConceptBlueprint,
    llm: &mut dyn AgentLlm,
) -> Result<AgentVerdict, AgentError> {
    require_translation(ctx)?;
    let target = ctx.target_lang;
    let messages = vec![
        ChatMessage::system("You check that a translation preserves the concepts of its source program."),
        ChatMessage::user(format!(
            "{VERIFY_CONCEPTS_MARKER}\n\
             Blueprint of the {} source:\n{}\n\
             Does the {target} translation below preserve every concept? Answer with a line \
             `VERDICT: PASS` or `VERDICT: FAIL`, followed by one `HINT:` line per problem.\n\n```{target}\n{}\n```",
            ctx.source_lang,
            blueprint.render(),
            ctx.translated_code
        )),
    ];
    let response = llm.ask(AgentKind::ConceptVerifier.as_str(), messages)?;
    let (verdict, mut hints) = parse_concept_verdict(&response);
    Ok(match verdict {
        Some(Verdict::Pass) => AgentVerdict::pass(AgentKind::ConceptVerifier, response),
        Some(Verdict::Fail) => {
            if hints.is_empty() {
                let ids: Vec<&str> = blueprint.concepts.iter().map(|c| c.id.as_str()).collect();
                hints.push(Hint {
                    kind: HintKind::LogicRemoved,
                    message: format!("preserve the source concepts: {}", ids.join(", ")),
                    polarity: Polarity::Instruction,
                    snippet: None,
                });
            }
            AgentVerdict::fail(AgentKind::ConceptVerifier, hints, response)
        }
        _ => AgentVerdict::uncertain(AgentKind::ConceptVerifier, response),
    })
}

/// Asks for a self-contained test harness. The payload is the first fenced block.
pub fn generate_tests(ctx: &AgentContext<'_>, llm: &mut dyn AgentLlm) -> Result<AgentVerdict, AgentError> {
    require_translation(ctx)?;
    let target = ctx.target_lang;
    let messages = vec![
        ChatMessage::system(format!("You write tests for {target} programs.")),
        ChatMessage::user(format!(
            "{GENERATE_TESTS_MARKER}\n\
             Write {target} test code that will be appended after the program below in the same file and \
             run as the entry point. Drop any existing entry point assumptions. For each test print exactly \
             `PASS <name>` or `FAIL <name>` on its own line and exit non-zero if any test failed. \
             Base expected values on the original {} program.\n\nOriginal:\n```{}\n{}\n```\n\nProgram:\n```{target}\n{}\n```",
            ctx.source_lang, ctx.source_lang, ctx.source_code, ctx.translated_code
        )),
    ];
    let response = llm.ask(AgentKind::TestGenerator.as_str(), messages)?;
    let block = fenced_blocks(&response).into_iter().next().ok_or(AgentError::NoCodeBlock)?;
    Ok(AgentVerdict::uncertain(AgentKind::TestGenerator, block.content))
}
