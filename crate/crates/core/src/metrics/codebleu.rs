//! CodeBLEU-lite: a four-part code similarity score.
//!
//! 1. token BLEU over lexer tokens;
//! 2. keyword-weighted BLEU over the token stream with identifiers abstracted to a
//!    placeholder, keywords weighing 5x in the unigram precision;
//! 3. bracket-structure match: F1 over the multiset of bracket-nesting signatures;
//! 4. identifier-flow match: F1 over `(source, target)` identifier pairs taken from
//!    assignments.
//!
//! Parts 3 and 4 stand in for AST and dataflow matching, so scores are not comparable
//! with full CodeBLEU numbers.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::bleu::{bleu, weighted_bleu};
use super::MetricsError;
use crate::lexer::{syntax_for, tokenize, Token, TokenKind};

pub const KEYWORD_WEIGHT: f64 = 5.0;
const MAX_ORDER: usize = 4;
const IDENT_PLACEHOLDER: &str = "<id>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuWeights(pub [f64; 4]);

impl Default for CodeBleuWeights {
    fn default() -> Self {
        Self([0.25; 4])
    }
}

impl CodeBleuWeights {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MetricsError::InvalidWeights("weights must be non-negative".into()));
        }
        let total: f64 = self.0.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MetricsError::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuScore {
    pub total: f64,
    pub token_bleu: f64,
    pub keyword_bleu: f64,
    pub bracket_match: f64,
    pub flow_match: f64,
}

pub fn codebleu_lite(
    candidate: &str,
    reference: &str,
    lang: &str,
    weights: CodeBleuWeights,
) -> Result<CodeBleuScore, MetricsError> {
    weights.validate()?;
    let syntax = syntax_for(lang).ok_or_else(|| MetricsError::UnknownLanguage(lang.to_string()))?;
    let cand = tokenize(candidate, syntax);
    let refr = tokenize(reference, syntax);

    let zero = CodeBleuScore {
        total: 0.0,
        token_bleu: 0.0,
        keyword_bleu: 0.0,
        bracket_match: 0.0,
        flow_match: 0.0,
    };
    let cand_text = lexemes(&cand);
    let ref_text = lexemes(&refr);
    if cand_text.is_empty() || ref_text.is_empty() {
        return Ok(zero);
    }
    // Orders above the reference length cannot match even for an exact copy.
    let order = MAX_ORDER.min(ref_text.len());

    let token_bleu = bleu(&cand_text, &ref_text, order);
    let cand_abs = abstracted(&cand);
    let ref_abs = abstracted(&refr);
    let keyword_bleu = weighted_bleu(&cand_abs, &ref_abs, order, |(kind, _)| {
        if *kind == TokenKind::Keyword {
            KEYWORD_WEIGHT
        } else {
            1.0
        }
    });
    let bracket_match = multiset_f1(&bracket_signatures(&cand), &bracket_signatures(&refr));
    let flow_match = multiset_f1(&dataflow_pairs(&cand), &dataflow_pairs(&refr));

    let parts = [token_bleu, keyword_bleu, bracket_match, flow_match];
    let total = parts
        .iter()
        .zip(weights.0)
        .map(|(p, w)| p * w)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(CodeBleuScore {
        total,
        token_bleu,
        keyword_bleu,
        bracket_match,
        flow_match,
    })
}

fn lexemes(tokens: &[Token]) -> Vec<&str> {
    tokens
        .iter()
        .filter(|t| !matches!(t.kind, TokenKind::Indent | TokenKind::Dedent))
        .map(|t| t.text.as_str())
        .collect()
}

fn abstracted(tokens: &[Token]) -> Vec<(TokenKind, &str)> {
    tokens
        .iter()
        .filter(|t| !matches!(t.kind, TokenKind::Indent | TokenKind::Dedent))
        .map(|t| match t.kind {
            TokenKind::Ident => (TokenKind::Ident, IDENT_PLACEHOLDER),
            kind => (kind, t.text.as_str()),
        })
        .collect()
}

fn block_symbol(token: &Token) -> char {
    match token.kind {
        TokenKind::Indent | TokenKind::Dedent => ':',
        _ => token.text.chars().next().unwrap_or('?'),
    }
}

fn closes(open: char, close: char) -> bool {
    matches!((open, close), ('(', ')') | ('[', ']') | ('{', '}') | (':', ':'))
}

/// One signature per bracket (or indentation block): its type, nesting depth and the
/// types of its direct children, e.g. `{@1[(,{]`.
pub fn bracket_signatures(tokens: &[Token]) -> Vec<String> {
    struct Frame {
        symbol: char,
        depth: usize,
        children: String,
    }
    let finish = |f: Frame| format!("{}@{}[{}]", f.symbol, f.depth, f.children);
    let mut stack: Vec<Frame> = Vec::new();
    let mut out = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Open | TokenKind::Indent => {
                let symbol = block_symbol(tok);
                if let Some(parent) = stack.last_mut() {
                    if !parent.children.is_empty() {
                        parent.children.push(',');
                    }
                    parent.children.push(symbol);
                }
                stack.push(Frame {
                    symbol,
                    depth: stack.len() + 1,
                    children: String::new(),
                });
            }
            TokenKind::Close | TokenKind::Dedent => {
                let symbol = block_symbol(tok);
                if let Some(pos) = stack.iter().rposition(|f| closes(f.symbol, symbol)) {
                    while stack.len() > pos {
                        out.push(finish(stack.pop().unwrap()));
                    }
                }
            }
            _ => {}
        }
    }
    while let Some(frame) = stack.pop() {
        out.push(finish(frame));
    }
    out
}

const ASSIGNMENT_OPS: &[&str] = &[
    "=", ":=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", "**=", "//=",
];

/// `(source, target)` pairs: inside each statement with an assignment, every
/// identifier on the right-hand side that was assigned earlier flows into the target
/// (the last identifier before the operator at bracket depth zero). Each pair is kept
/// once, at its first occurrence.
pub fn dataflow_pairs(tokens: &[Token]) -> Vec<(String, String)> {
    let mut defined: HashSet<&str> = HashSet::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut pairs = Vec::new();

    for statement in statements(tokens) {
        let mut depth = 0i32;
        let mut target: Option<&str> = None;
        let mut op_at = None;
        for (i, tok) in statement.iter().enumerate() {
            match tok.kind {
                TokenKind::Open => depth += 1,
                TokenKind::Close => depth -= 1,
                TokenKind::Ident if depth == 0 => target = Some(&tok.text),
                TokenKind::Op if depth == 0 && ASSIGNMENT_OPS.contains(&tok.text.as_str()) => {
                    op_at = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let (Some(target), Some(op_at)) = (target, op_at) else {
            continue;
        };
        for tok in &statement[op_at + 1..] {
            if tok.kind == TokenKind::Ident && defined.contains(tok.text.as_str()) {
                let pair = (tok.text.clone(), target.to_string());
                if seen.insert(pair.clone()) {
                    pairs.push(pair);
                }
            }
        }
        defined.insert(target);
    }
    pairs
}

/// Splits a token stream at `;`, line changes and block tokens.
fn statements(tokens: &[Token]) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..tokens.len() {
        let tok = &tokens[i];
        let boundary = matches!(tok.kind, TokenKind::Indent | TokenKind::Dedent)
            || (tok.kind == TokenKind::Op && tok.text == ";")
            || (tok.kind == TokenKind::Open && tok.text == "{")
            || (tok.kind == TokenKind::Close && tok.text == "}");
        let line_break = tokens.get(i + 1).is_some_and(|next| next.line != tok.line);
        if boundary {
            if start < i {
                out.push(&tokens[start..i]);
            }
            start = i + 1;
        } else if line_break || i + 1 == tokens.len() {
            out.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    out
}

fn multiset_f1<T: Eq + Hash + Ord>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    fn count<T: Ord>(items: &[T]) -> BTreeMap<&T, usize> {
        let mut m = BTreeMap::new();
        for it in items {
            *m.entry(it).or_insert(0) += 1;
        }
        m
    }
    let (c, r) = (count(candidate), count(reference));
    let overlap: usize = c
        .iter()
        .map(|(k, n)| (*n).min(r.get(k).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / candidate.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PY: &str = "def total(values):\n    acc = 0\n    for v in values:\n        acc = acc + v\n    scaled = acc * 2\n    return scaled\n";
    const PY_RENAMED: &str = "def total(items):\n    s = 0\n    for x in items:\n        s = s + x\n    out = s * 2\n    return out\n";

    #[test]
    fn identical_code_scores_one() {
        let s = codebleu_lite(PY, PY, "python", CodeBleuWeights::default()).unwrap();
        assert_eq!(s.total, 1.0);
        assert_eq!(
            [s.token_bleu, s.keyword_bleu, s.bracket_match, s.flow_match],
            [1.0; 4]
        );
        let tiny = codebleu_lite("x", "x", "c", CodeBleuWeights::default()).unwrap();
        assert_eq!(tiny.total, 1.0);
    }

    #[test]
    fn renaming_hits_token_and_flow_only() {
        let s = codebleu_lite(PY_RENAMED, PY, "python", CodeBleuWeights::default()).unwrap();
        assert_eq!(s.keyword_bleu, 1.0);
        assert_eq!(s.bracket_match, 1.0);
        assert!(s.token_bleu < 1.0);
        assert!(s.flow_match < 1.0);
        assert!(s.total > 0.0 && s.total < 1.0, "{s:?}");
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let s = codebleu_lite("", PY, "python", CodeBleuWeights::default()).unwrap();
        assert_eq!(s.total, 0.0);
        let s = codebleu_lite("# only a comment\n", PY, "python", CodeBleuWeights::default())
            .unwrap();
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            codebleu_lite("a", "a", "cobol", CodeBleuWeights::default()),
            Err(MetricsError::UnknownLanguage("cobol".into()))
        );
        assert!(matches!(
            codebleu_lite("a", "a", "c", CodeBleuWeights([0.5, 0.5, 0.5, -0.5])),
            Err(MetricsError::InvalidWeights(_))
        ));
        assert!(matches!(
            codebleu_lite("a", "a", "c", CodeBleuWeights([0.3, 0.3, 0.3, 0.3])),
            Err(MetricsError::InvalidWeights(_))
        ));
    }

    #[test]
    fn bracket_signatures_track_nesting() {
        let toks = tokenize("int f(int a) { if (a) { g(a[0]); } }", syntax_for("c").unwrap());
        let mut sigs = bracket_signatures(&toks);
        sigs.sort();
        assert_eq!(sigs, ["(@1[]", "(@2[]", "(@3[[]", "[@4[]", "{@1[(,{]", "{@2[(]"]);
    }

    #[test]
    fn dataflow_pairs_follow_assignments() {
        let toks = tokenize(
            "int a = 1;\nint b = a + 2;\nb += a;\nint c = b * a;\n",
            syntax_for("c").unwrap(),
        );
        let pairs = dataflow_pairs(&toks);
        let pairs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(pairs, [("a", "b"), ("b", "c"), ("a", "c")]);
    }
}
