//! A small language-aware lexer shared by the artifact linter and the metrics.
//!
//! It knows enough about each language to skip comments, keep string literals whole,
//! separate keywords from identifiers, and (for indentation-scoped languages) emit
//! synthetic indent/dedent tokens so block structure is visible.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Keyword,
    Number,
    Str,
    Op,
    Open,
    Close,
    Indent,
    Dedent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based source line.
    pub line: u32,
}

#[derive(Debug)]
pub struct Syntax {
    pub language: &'static str,
    pub line_comments: &'static [&'static str],
    pub block_comment: Option<(&'static str, &'static str)>,
    pub keywords: &'static [&'static str],
    pub indent_blocks: bool,
    pub backtick_strings: bool,
    pub python_string_prefixes: bool,
}

impl Syntax {
    pub fn is_keyword(&self, word: &str) -> bool {
        self.keywords.contains(&word)
    }
}

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "bool", "true", "false", "NULL",
];

const CPP_KEYWORDS: &[&str] = &[
    "alignas", "alignof", "auto", "bool", "break", "case", "catch", "char", "class", "const",
    "constexpr", "const_cast", "continue", "decltype", "default", "delete", "do", "double",
    "dynamic_cast", "else", "enum", "explicit", "export", "extern", "false", "float", "for",
    "friend", "goto", "if", "inline", "int", "long", "mutable", "namespace", "new", "noexcept",
    "nullptr", "operator", "private", "protected", "public", "register", "reinterpret_cast",
    "return", "short", "signed", "sizeof", "static", "static_assert", "static_cast", "struct",
    "switch", "template", "this", "throw", "true", "try", "typedef", "typename", "union",
    "unsigned", "using", "virtual", "void", "volatile", "while",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface",
    "long", "native", "new", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "var", "true", "false", "null",
];

const GO_KEYWORDS: &[&str] = &[
    "break", "case", "chan", "const", "continue", "default", "defer", "else", "fallthrough",
    "for", "func", "go", "goto", "if", "import", "interface", "map", "package", "range",
    "return", "select", "struct", "switch", "type", "var", "true", "false", "nil",
];

const SOLIDITY_KEYWORDS: &[&str] = &[
    "address", "anonymous", "as", "assembly", "bool", "break", "bytes", "calldata", "catch",
    "constant", "constructor", "continue", "contract", "delete", "do", "else", "emit", "enum",
    "event", "external", "fallback", "false", "for", "function", "if", "immutable", "import",
    "indexed", "interface", "internal", "is", "library", "mapping", "memory", "modifier", "new",
    "override", "payable", "pragma", "private", "public", "pure", "receive", "return",
    "returns", "revert", "storage", "string", "struct", "true", "try", "uint", "uint256",
    "int", "int256", "unchecked", "using", "view", "virtual", "while", "require",
];

const MOVE_KEYWORDS: &[&str] = &[
    "abort", "acquires", "as", "break", "const", "continue", "copy", "else", "false", "fun",
    "friend", "if", "let", "loop", "module", "move", "mut", "native", "public", "return",
    "script", "spec", "struct", "true", "use", "while", "has", "entry", "address", "bool",
    "u8", "u16", "u32", "u64", "u128", "u256", "vector", "signer",
];

const RUST_KEYWORDS: &[&str] = &[
    "as", "break", "const", "continue", "crate", "else", "enum", "extern", "false", "fn", "for",
    "if", "impl", "in", "let", "loop", "match", "mod", "move", "mut", "pub", "ref", "return",
    "self", "Self", "static", "struct", "super", "trait", "true", "type", "unsafe", "use",
    "where", "while", "async", "await", "dyn",
];

const JS_KEYWORDS: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete",
    "do", "else", "export", "extends", "false", "finally", "for", "function", "if", "import",
    "in", "instanceof", "let", "new", "null", "return", "super", "switch", "this", "throw",
    "true", "try", "typeof", "var", "void", "while", "with", "yield", "async", "await",
];

const C_COMMENTS: &[&str] = &["//"];

macro_rules! c_family {
    ($name:literal, $kw:expr) => {
        Syntax {
            language: $name,
            line_comments: C_COMMENTS,
            block_comment: Some(("/*", "*/")),
            keywords: $kw,
            indent_blocks: false,
            backtick_strings: false,
            python_string_prefixes: false,
        }
    };
}

static SYNTAXES: &[Syntax] = &[
    Syntax {
        language: "python",
        line_comments: &["#"],
        block_comment: None,
        keywords: PYTHON_KEYWORDS,
        indent_blocks: true,
        backtick_strings: false,
        python_string_prefixes: true,
    },
    c_family!("c", C_KEYWORDS),
    c_family!("cpp", CPP_KEYWORDS),
    c_family!("java", JAVA_KEYWORDS),
    Syntax {
        language: "go",
        line_comments: C_COMMENTS,
        block_comment: Some(("/*", "*/")),
        keywords: GO_KEYWORDS,
        indent_blocks: false,
        backtick_strings: true,
        python_string_prefixes: false,
    },
    c_family!("solidity", SOLIDITY_KEYWORDS),
    c_family!("move", MOVE_KEYWORDS),
    c_family!("rust", RUST_KEYWORDS),
    Syntax {
        language: "javascript",
        line_comments: C_COMMENTS,
        block_comment: Some(("/*", "*/")),
        keywords: JS_KEYWORDS,
        indent_blocks: false,
        backtick_strings: true,
        python_string_prefixes: false,
    },
];

pub fn syntax_for(lang: &str) -> Option<&'static Syntax> {
    SYNTAXES.iter().find(|s| s.language == lang)
}

/// Keyword-free rules with `//`, `#` and `/* */` comments for languages without a table.
pub static GENERIC_SYNTAX: Syntax = Syntax {
    language: "generic",
    line_comments: &["//", "#"],
    block_comment: Some(("/*", "*/")),
    keywords: &[],
    indent_blocks: false,
    backtick_strings: false,
    python_string_prefixes: false,
};

pub fn syntax_or_generic(lang: &str) -> &'static Syntax {
    syntax_for(lang).unwrap_or(&GENERIC_SYNTAX)
}

const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", "**=", "//=", "...", "===", "!==", "->", "=>", "::", "==", "!=", "<=",
    ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
    "**", "//", ":=",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn advance(&mut self, bytes: usize) {
        let end = self.pos + bytes;
        while self.pos < end {
            self.bump();
        }
    }
}

/// Tokenizes `code` with the rules of `syntax`. Never fails: unknown characters become
/// single-character operator tokens and unterminated literals run to end of input.
pub fn tokenize(code: &str, syntax: &Syntax) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = Cursor {
        src: code,
        pos: 0,
        line: 1,
    };
    let mut nesting = 0usize;
    let mut indents = vec![0usize];
    let mut at_line_start = true;

    while cur.pos < code.len() {
        if syntax.indent_blocks && at_line_start && nesting == 0 {
            at_line_start = false;
            let line_rest = cur.rest();
            let width: usize = line_rest
                .chars()
                .take_while(|c| *c == ' ' || *c == '\t')
                .map(|c| if c == '\t' { 8 } else { 1 })
                .sum();
            let body = line_rest.trim_start_matches([' ', '\t']);
            let blank = body.is_empty()
                || body.starts_with('\n')
                || body.starts_with("\r\n")
                || syntax.line_comments.iter().any(|c| body.starts_with(c));
            if !blank {
                let current = *indents.last().unwrap();
                if width > current {
                    indents.push(width);
                    out.push(Token {
                        kind: TokenKind::Indent,
                        text: String::new(),
                        line: cur.line,
                    });
                } else {
                    while width < *indents.last().unwrap() {
                        indents.pop();
                        out.push(Token {
                            kind: TokenKind::Dedent,
                            text: String::new(),
                            line: cur.line,
                        });
                    }
                }
            }
        }

        let c = match cur.peek() {
            Some(c) => c,
            None => break,
        };
        if c == '\n' {
            cur.bump();
            at_line_start = true;
            continue;
        }
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let rest = cur.rest();
        if syntax.line_comments.iter().any(|m| rest.starts_with(m)) {
            let len = rest.find('\n').unwrap_or(rest.len());
            cur.advance(len);
            continue;
        }
        if let Some((open, close)) = syntax.block_comment {
            if rest.starts_with(open) {
                let len = rest[open.len()..]
                    .find(close)
                    .map_or(rest.len(), |i| open.len() + i + close.len());
                cur.advance(len);
                continue;
            }
        }

        let line = cur.line;
        let start = cur.pos;
        let kind = if let Some(len) = string_literal_len(rest, syntax) {
            cur.advance(len);
            TokenKind::Str
        } else if c.is_alphabetic() || c == '_' || c == '$' {
            while matches!(cur.peek(), Some(ch) if ch.is_alphanumeric() || ch == '_' || ch == '$') {
                cur.bump();
            }
            if syntax.is_keyword(&code[start..cur.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if c.is_ascii_digit() {
            while matches!(cur.peek(), Some(ch) if ch.is_alphanumeric() || ch == '_' || ch == '.') {
                cur.bump();
            }
            TokenKind::Number
        } else if "([{".contains(c) {
            cur.bump();
            nesting += 1;
            TokenKind::Open
        } else if ")]}".contains(c) {
            cur.bump();
            nesting = nesting.saturating_sub(1);
            TokenKind::Close
        } else {
            let len = OPERATORS
                .iter()
                .find(|op| rest.starts_with(**op))
                .map_or(c.len_utf8(), |op| op.len());
            cur.advance(len);
            TokenKind::Op
        };
        out.push(Token {
            kind,
            text: code[start..cur.pos].to_string(),
            line,
        });
    }
    if syntax.indent_blocks {
        let line = cur.line;
        for _ in 1..indents.len() {
            out.push(Token {
                kind: TokenKind::Dedent,
                text: String::new(),
                line,
            });
        }
    }
    out
}

/// Byte length of a string literal starting at the beginning of `rest`, if one does.
fn string_literal_len(rest: &str, syntax: &Syntax) -> Option<usize> {
    let mut prefix = 0;
    if syntax.python_string_prefixes {
        prefix = rest
            .chars()
            .take(3)
            .take_while(|c| "rRbBuUfF".contains(*c))
            .count();
    }
    let body = &rest[prefix..];
    let quote = body.chars().next()?;
    let is_quote = quote == '"' || quote == '\'' || (quote == '`' && syntax.backtick_strings);
    if !is_quote {
        return None;
    }
    if prefix > 0 && !(rest.as_bytes()[..prefix].iter().all(u8::is_ascii_alphabetic)) {
        return None;
    }
    if syntax.python_string_prefixes {
        let triple: String = std::iter::repeat(quote).take(3).collect();
        if body.starts_with(&triple) {
            let len = body[3..]
                .find(&triple)
                .map_or(body.len(), |i| 3 + i + 3);
            return Some(prefix + len);
        }
    }
    let raw = quote == '`';
    let mut escaped = false;
    for (i, ch) in body.char_indices().skip(1) {
        if escaped {
            escaped = false;
            continue;
        }
        if ch == '\\' && !raw {
            escaped = true;
        } else if ch == quote {
            return Some(prefix + i + ch.len_utf8());
        } else if ch == '\n' && !raw {
            return Some(prefix + i);
        }
    }
    Some(rest.len())
}
