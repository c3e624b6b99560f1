//! Pulling the translated program out of a model response.

use thiserror::Error;

use crate::codeblock::fenced_blocks;
use crate::lexer::syntax_or_generic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response contains no code block")]
pub struct NoCodeBlock;

/// Share of non-blank lines that must look like code for an unfenced response.
pub const CODE_LINE_RATIO: f64 = 0.8;

fn aliases(lang: &str) -> &'static [&'static str] {
    match lang {
        "python" => &["python", "py", "python3"],
        "cpp" => &["cpp", "c++", "cxx", "cc"],
        "c" => &["c", "h"],
        "go" => &["go", "golang"],
        "solidity" => &["solidity", "sol"],
        "javascript" => &["javascript", "js"],
        "rust" => &["rust", "rs"],
        "java" => &["java"],
        "move" => &["move"],
        _ => &[],
    }
}

fn tag_matches(tag: &str, lang: &str) -> bool {
    tag == lang || aliases(lang).contains(&tag)
}

fn looks_like_code(line: &str, lang: &str) -> bool {
    let t = line.trim();
    if t.ends_with(['{', ';', '}', ')', ']']) {
        return true;
    }
    let first: String = t.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '#').collect();
    let first = first.trim_start_matches('#');
    t.starts_with('#') && !t.starts_with("# ") || syntax_or_generic(lang).is_keyword(first)
}

pub fn extract_code_block(response: &str, target_lang: &str) -> Result<String, NoCodeBlock> {
    let blocks = fenced_blocks(response);
    if let Some(b) = blocks.iter().find(|b| b.tag.as_deref().is_some_and(|t| tag_matches(t, target_lang))) {
        return Ok(b.content.clone());
    }
    if let Some(b) = blocks.iter().find(|b| b.tag.is_none()) {
        return Ok(b.content.clone());
    }
    let lines: Vec<&str> = response.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() || response.contains("```") || response.contains("~~~") {
        return Err(NoCodeBlock);
    }
    let code_like = lines.iter().filter(|l| looks_like_code(l, target_lang)).count();
    if code_like as f64 >= CODE_LINE_RATIO * lines.len() as f64 {
        Ok(response.trim_matches('\n').to_string())
    } else {
        Err(NoCodeBlock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_block() {
        let r = "Here:\n```c\nint x;\n```\nDone.";
        assert_eq!(extract_code_block(r, "c").unwrap(), "int x;");
        assert_eq!(extract_code_block("```C++\nint y;\n```", "cpp").unwrap(), "int y;");
    }

    #[test]
    fn untagged_beats_wrong_language() {
        let r = "```python\nprint(1)\n```\n```\nint main(void) { return 0; }\n```";
        assert_eq!(extract_code_block(r, "c").unwrap(), "int main(void) { return 0; }");
        assert_eq!(extract_code_block("```python\nprint(1)\n```", "c"), Err(NoCodeBlock));
    }

    #[test]
    fn prose_is_rejected() {
        let r = "I cannot translate this program because it relies on dynamic features.\nSorry about that.";
        assert_eq!(extract_code_block(r, "c"), Err(NoCodeBlock));
        assert_eq!(extract_code_block("", "c"), Err(NoCodeBlock));
    }

    #[test]
    fn bare_code_is_accepted() {
        let r = "#include <stdio.h>\nint main(void) {\n    printf(\"hi\\n\");\n    return 0;\n}\n";
        assert_eq!(extract_code_block(r, "c").unwrap(), r.trim_end());
        let mostly_prose = "int x;\nThis line is prose\nSo is this one\n";
        assert_eq!(extract_code_block(mostly_prose, "c"), Err(NoCodeBlock));
    }
}
