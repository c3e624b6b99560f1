use serde::{Deserialize, Serialize};

use super::{AgentError, AgentLlm};
use crate::gateway::ChatMessage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDef {
    pub id: String,
    pub description: String,
}

/// Language-neutral summary of what a source program does.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConceptBlueprint {
    pub concepts: Vec<ConceptDef>,
    pub narrative: String,
}

impl ConceptBlueprint {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.concepts.is_empty() {
            out.push_str("Concepts:\n");
            for c in &self.concepts {
                out.push_str(&format!("- {}: {}\n", c.id, c.description));
            }
        }
        if !self.narrative.is_empty() {
            out.push_str(&format!("Summary: {}\n", self.narrative));
        }
        out
    }
}

/// The controlled set of concept ids a blueprint may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptVocabulary(pub Vec<ConceptDef>);

const DEFAULT_CONCEPTS: &[(&str, &str)] = &[
    ("iteration", "repeating work over a range or collection"),
    ("recursion", "a function defined in terms of itself"),
    ("arithmetic", "numeric computation"),
    ("branching", "conditional control flow"),
    ("string manipulation", "building or transforming text"),
    ("collections", "lists, arrays, maps or sets"),
    ("resource ownership", "who owns and releases a value or asset"),
    ("error propagation", "signalling and forwarding failures"),
    ("memory management", "allocation and release of memory"),
    ("access control", "restricting who may call an operation"),
    ("state mutation", "updating persistent or shared state"),
    ("events", "emitting notifications for observers"),
    ("input output", "reading input or printing output"),
    ("data structures", "user-defined records or types"),
    ("higher order functions", "functions taking or returning functions"),
    ("concurrency", "work that runs in parallel or asynchronously"),
];

impl Default for ConceptVocabulary {
    fn default() -> Self {
        Self(
            DEFAULT_CONCEPTS
                .iter()
                .map(|(id, description)| ConceptDef {
                    id: (*id).into(),
                    description: (*description).into(),
                })
                .collect(),
        )
    }
}

fn canonical(id: &str) -> String {
    id.trim()
        .trim_end_matches('.')
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl ConceptVocabulary {
    pub fn lookup(&self, id: &str) -> Option<&ConceptDef> {
        let key = canonical(id);
        self.0.iter().find(|c| canonical(&c.id) == key)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.0.iter().map(|c| c.id.as_str()).collect()
    }
}

/// Reads a `concepts: a, b` line against the vocabulary; the remaining lines form the
/// narrative. Without any recognised concept the whole response is the narrative.
pub fn parse_blueprint(response: &str, vocabulary: &ConceptVocabulary) -> ConceptBlueprint {
    let mut concepts: Vec<ConceptDef> = Vec::new();
    let mut narrative = Vec::new();
    for line in response.lines() {
        let trimmed = line.trim();
        let is_concept_line = trimmed.len() >= 9 && trimmed[..9].eq_ignore_ascii_case("concepts:");
        if is_concept_line {
            for item in trimmed[9..].split([',', ';']) {
                if let Some(def) = vocabulary.lookup(item) {
                    if !concepts.contains(def) {
                        concepts.push(def.clone());
                    }
                }
            }
        } else if !trimmed.is_empty() {
            narrative.push(trimmed);
        }
    }
    if concepts.is_empty() {
        return ConceptBlueprint {
            concepts,
            narrative: response.trim().to_string(),
        };
    }
    ConceptBlueprint {
        concepts,
        narrative: narrative.join(" "),
    }
}

pub const EXPLAIN_CONCEPTS_MARKER: &str = "Task: explain-concepts";

/// Asks the model for the programming concepts behind `source_code`.
pub fn explain_concepts(
    source_code: &str,
    source_lang: &str,
    vocabulary: &ConceptVocabulary,
    llm: &mut dyn AgentLlm,
) -> Result<ConceptBlueprint, AgentError> {
    if source_code.trim().is_empty() {
        return Err(AgentError::EmptyInput("source code"));
    }
    let messages = vec![
        ChatMessage::system("You analyse programs and describe the programming concepts they rely on."),
        ChatMessage::user(format!(
            "{EXPLAIN_CONCEPTS_MARKER}\n\
             List the concepts used by the {source_lang} program below on one line starting with \
             `concepts:`, choosing only from: {}.\nThen summarise what the program does in one paragraph.\n\n\
             ```{source_lang}\n{source_code}\n```",
            vocabulary.ids().join(", ")
        )),
    ];
    let response = llm.ask("BLUEPRINT", messages)?;
    Ok(parse_blueprint(&response, vocabulary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayError;

    struct Fixed(&'static str, usize);

    impl AgentLlm for Fixed {
        fn ask(&mut self, _: &str, _: Vec<ChatMessage>) -> Result<String, GatewayError> {
            self.1 += 1;
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn parses_concept_line() {
        let mut llm = Fixed("concepts: iteration, arithmetic\nSums the first n integers.", 0);
        let bp = explain_concepts("for i in range(n): s += i", "python", &ConceptVocabulary::default(), &mut llm).unwrap();
        let ids: Vec<_> = bp.concepts.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["iteration", "arithmetic"]);
        assert_eq!(bp.narrative, "Sums the first n integers.");
    }

    #[test]
    fn unknown_and_aliased_ids() {
        let bp = parse_blueprint("Concepts: Resource-Ownership, telepathy, iteration.", &ConceptVocabulary::default());
        let ids: Vec<_> = bp.concepts.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["resource ownership", "iteration"]);
    }

    #[test]
    fn degraded_mode() {
        let bp = parse_blueprint("It adds numbers together.", &ConceptVocabulary::default());
        assert!(bp.concepts.is_empty());
        assert_eq!(bp.narrative, "It adds numbers together.");
    }

    #[test]
    fn empty_source_never_calls_backend() {
        let mut llm = Fixed("concepts: iteration", 0);
        assert!(explain_concepts("  ", "python", &ConceptVocabulary::default(), &mut llm).is_err());
        assert_eq!(llm.1, 0);
    }
}
