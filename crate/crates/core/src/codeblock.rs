//! Markdown fenced code blocks in model responses.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    /// First word of the info string, lowercased; `None` when untagged.
    pub tag: Option<String>,
    pub content: String,
}

/// Every closed ``` / ~~~ fenced block, in order. An unterminated trailing fence is ignored.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    let mut open: Option<(String, Option<String>, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match &mut open {
            None => {
                if let Some(fence) = fence_of(trimmed) {
                    let info = trimmed[fence.len()..].trim();
                    let tag = info
                        .split_whitespace()
                        .next()
                        .map(|t| t.trim_matches(|c| c == '{' || c == '}' || c == '.').to_ascii_lowercase())
                        .filter(|t| !t.is_empty());
                    open = Some((fence, tag, Vec::new()));
                }
            }
            Some((fence, tag, lines)) => {
                if trimmed.starts_with(fence.as_str()) && trimmed[fence.len()..].trim().is_empty() {
                    blocks.push(FencedBlock {
                        tag: tag.take(),
                        content: lines.join("\n"),
                    });
                    open = None;
                } else {
                    lines.push(line);
                }
            }
        }
    }
    blocks
}

fn fence_of(line: &str) -> Option<String> {
    for ch in ['`', '~'] {
        let n = line.chars().take_while(|&c| c == ch).count();
        if n >= 3 {
            return Some(std::iter::repeat(ch).take(n).collect());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_untagged_and_unterminated() {
        let text = "Here:\n```C\nint x;\n```\nand\n```\nplain\n  indented\n```\n```py\nnever closed";
        let blocks = fenced_blocks(text);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].tag.as_deref(), Some("c"));
        assert_eq!(blocks[0].content, "int x;");
        assert_eq!(blocks[1].tag, None);
        assert_eq!(blocks[1].content, "plain\n  indented");
    }

    #[test]
    fn longer_fence_wraps_shorter() {
        let blocks = fenced_blocks("````md\n```c\nx\n```\n````");
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].content, "```c\nx\n```");
    }
}
