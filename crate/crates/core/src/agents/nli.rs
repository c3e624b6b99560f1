//! Symbolic fact checking: claims are labeled by normalized-token containment
//! against a per-language fact base.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, Claim, ClaimLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fact {
    pub fact_id: String,
    pub statement: String,
    #[serde(default)]
    pub negations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactBase {
    pub language: String,
    pub facts: Vec<Fact>,
}

impl FactBase {
    pub fn validate(&self) -> Result<(), AgentError> {
        let mut seen = HashSet::new();
        for fact in &self.facts {
            if !seen.insert(fact.fact_id.as_str()) {
                return Err(AgentError::InvalidFactBase(format!("duplicate fact_id `{}`", fact.fact_id)));
            }
            if normalize(&fact.statement).is_empty() {
                return Err(AgentError::InvalidFactBase(format!("fact `{}` has an empty statement", fact.fact_id)));
            }
            if fact.negations.iter().any(|n| normalize(n).is_empty()) {
                return Err(AgentError::InvalidFactBase(format!("fact `{}` has an empty negation", fact.fact_id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let base: Self = serde_json::from_str(text).map_err(|e| AgentError::InvalidFactBase(e.to_string()))?;
        base.validate()?;
        Ok(base)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::InvalidFactBase(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Function words ignored when comparing. Negation words are deliberately absent.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "to", "of", "in", "on",
    "for", "and", "or", "that", "this", "these", "those", "it", "its", "by", "with", "as", "at",
    "from", "which", "there", "their", "they", "also", "so", "then", "than", "into",
];

const NEGATION_WORDS: &[&str] = &["not", "no", "never", "cannot", "cant", "doesnt", "dont", "isnt", "arent", "without", "neither", "nor"];

/// Lowercased alphanumeric tokens minus stopwords. Apostrophes are dropped first so
/// "doesn't" becomes "doesnt".
pub fn normalize(text: &str) -> BTreeSet<String> {
    let lowered: String = text.to_lowercase().chars().filter(|&c| c != '\'' && c != '\u{2019}').collect();
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

/// Tokens split into content words and whether any negation word is present.
fn polarized(text: &str) -> (BTreeSet<String>, bool) {
    let mut tokens = normalize(text);
    let before = tokens.len();
    tokens.retain(|t| !NEGATION_WORDS.contains(&t.as_str()));
    let negated = tokens.len() != before;
    (tokens, negated)
}

/// Sentences of at least three words, split on periods and newlines.
pub fn extract_claims(explanation: &str) -> Vec<Claim> {
    explanation
        .split(['.', '\n'])
        .map(str::trim)
        .filter(|s| s.split_whitespace().count() >= 3)
        .map(|s| Claim {
            text: s.to_string(),
            label: ClaimLabel::Neutral,
            evidence: None,
        })
        .collect()
}

/// Labels each claim by comparing content words (normalized tokens minus negation
/// words) and negation polarity. Contradiction is checked first across all facts: a
/// claim covering a negation pattern's content with the same polarity, or covering a
/// statement's content with the opposite polarity, is CONTRADICTED. A claim covering a
/// statement's content with the same polarity is ENTAILED. Anything else is NEUTRAL.
pub fn nli_check(claims: &[Claim], fact_base: &FactBase) -> Vec<Claim> {
    type Polar = (BTreeSet<String>, bool);
    let facts: Vec<(&Fact, Polar, Vec<Polar>)> = fact_base
        .facts
        .iter()
        .map(|f| (f, polarized(&f.statement), f.negations.iter().map(|n| polarized(n)).collect()))
        .collect();
    claims
        .iter()
        .map(|claim| {
            let (tokens, negated) = polarized(&claim.text);
            let covers = |p: &Polar| !p.0.is_empty() && p.0.is_subset(&tokens);
            let label = |label, fact: &Fact| Claim {
                text: claim.text.clone(),
                label,
                evidence: Some(fact.fact_id.clone()),
            };
            for (fact, statement, negations) in &facts {
                let by_pattern = negations.iter().any(|n| covers(n) && n.1 == negated);
                let by_flip = covers(statement) && statement.1 != negated;
                if by_pattern || by_flip {
                    return label(ClaimLabel::Contradicted, fact);
                }
            }
            for (fact, statement, _) in &facts {
                if covers(statement) && statement.1 == negated {
                    return label(ClaimLabel::Entailed, fact);
                }
            }
            Claim {
                text: claim.text.clone(),
                label: ClaimLabel::Neutral,
                evidence: None,
            }
        })
        .collect()
}
