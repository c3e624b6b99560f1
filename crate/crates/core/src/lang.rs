//! Language identifiers.

use std::collections::BTreeSet;

/// Lowercase language identifier such as `"python"` or `"cpp"`.
pub type LanguageId = String;

/// Languages accepted when no explicit set is configured.
pub const DEFAULT_LANGUAGES: [&str; 7] = ["python", "solidity", "move", "java", "c", "cpp", "go"];

/// The set of language ids an engine instance accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSet(BTreeSet<LanguageId>);

impl LanguageSet {
    pub fn new<I, S>(langs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(langs.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, lang: &str) -> bool {
        self.0.contains(lang)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for LanguageSet {
    fn default() -> Self {
        Self::new(DEFAULT_LANGUAGES)
    }
}

/// True when `lang` is a syntactically valid language id (non-empty, lowercase ascii,
/// digits, `+`, `#`, `-` or `_`).
pub fn is_valid_id(lang: &str) -> bool {
    !lang.is_empty()
        && lang
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || "+#-_".contains(c))
}

/// Conventional source file name for a language, used when writing code to disk.
pub fn default_source_file(lang: &str) -> String {
    let ext = match lang {
        "python" => "py",
        "c" => "c",
        "cpp" => "cpp",
        "java" => return "Main.java".to_string(),
        "go" => "go",
        "solidity" => "sol",
        "move" => "move",
        "rust" => "rs",
        "javascript" => "js",
        other => other,
    };
    format!("main.{ext}")
}
