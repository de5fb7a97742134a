//! Canonical identifier tokenization.
//!
//! Every component that compares identifiers (added-identifier extraction,
//! postings, influence scoring) goes through [`canonical_tokens`] so the
//! token spaces line up exactly.
//!
//! Rule: scan identifier-shaped words, drop the ones on the file extension's
//! keyword stoplist, split the rest at `_` and at lower-to-upper case
//! boundaries, lowercase the parts and discard empty or all-digit parts.

use std::collections::BTreeMap;

/// A raw identifier occurrence within a line, with its byte column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawIdent<'a> {
    pub column: usize,
    pub text: &'a str,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Scans identifier-shaped words. Numeric literals such as `0x1F` or `3e10`
/// are consumed whole so their letters never surface as identifiers.
pub fn raw_identifiers(line: &str) -> Vec<RawIdent<'_>> {
    let mut out = Vec::new();
    let mut iter = line.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        if is_ident_start(c) || c.is_ascii_digit() {
            let mut end = start + c.len_utf8();
            while let Some(&(i, next)) = iter.peek() {
                if is_ident_continue(next) {
                    end = i + next.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            if !c.is_ascii_digit() {
                out.push(RawIdent {
                    column: start,
                    text: &line[start..end],
                });
            }
        }
    }
    out
}

/// Splits one identifier into lowercase parts.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in ident.chars() {
        if c == '_' {
            flush(&mut current, &mut parts);
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower {
            flush(&mut current, &mut parts);
        }
        prev_lower = c.is_lowercase();
        current.extend(c.to_lowercase());
    }
    flush(&mut current, &mut parts);
    parts
}

fn flush(current: &mut String, parts: &mut Vec<String>) {
    if !current.is_empty() && !current.chars().all(|c| c.is_ascii_digit()) {
        parts.push(std::mem::take(current));
    } else {
        current.clear();
    }
}

/// Canonical tokens for one line of a file with extension `ext`.
pub fn canonical_tokens(line: &str, ext: &str) -> Vec<String> {
    let stop = stoplist(ext);
    raw_identifiers(line)
        .into_iter()
        .filter(|id| !stop.contains(&id.text))
        .flat_map(|id| split_identifier(id.text))
        .collect()
}

/// Token multiset as an ordered count map.
pub type TokenBag = BTreeMap<String, usize>;

pub fn bag<I: IntoIterator<Item = String>>(tokens: I) -> TokenBag {
    let mut bag = TokenBag::new();
    for t in tokens {
        *bag.entry(t).or_default() += 1;
    }
    bag
}

/// Lowercased file extension of `path`, or `""`.
pub fn extension(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => ext.to_ascii_lowercase(),
        _ => String::new(),
    }
}

const PYTHON: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield", "self", "cls",
];

const RUST: &[&str] = &[
    "as", "async", "await", "break", "const", "continue", "crate", "dyn", "else", "enum", "extern",
    "false", "fn", "for", "if", "impl", "in", "let", "loop", "match", "mod", "move", "mut", "pub",
    "ref", "return", "self", "Self", "static", "struct", "super", "trait", "true", "type",
    "unsafe", "use", "where", "while",
];

const JAVASCRIPT: &[&str] = &[
    "break",
    "case",
    "catch",
    "class",
    "const",
    "continue",
    "debugger",
    "default",
    "delete",
    "do",
    "else",
    "export",
    "extends",
    "false",
    "finally",
    "for",
    "function",
    "if",
    "import",
    "in",
    "instanceof",
    "let",
    "new",
    "null",
    "return",
    "super",
    "switch",
    "this",
    "throw",
    "true",
    "try",
    "typeof",
    "var",
    "void",
    "while",
    "with",
    "yield",
    "async",
    "await",
    "from",
    "of",
    "undefined",
    "interface",
    "type",
    "implements",
    "enum",
    "readonly",
    "public",
    "private",
    "protected",
    "static",
];

const GO: &[&str] = &[
    "break",
    "case",
    "chan",
    "const",
    "continue",
    "default",
    "defer",
    "else",
    "fallthrough",
    "for",
    "func",
    "go",
    "goto",
    "if",
    "import",
    "interface",
    "map",
    "package",
    "range",
    "return",
    "select",
    "struct",
    "switch",
    "type",
    "var",
    "nil",
    "true",
    "false",
];

const JAVA: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "try",
    "void",
    "volatile",
    "while",
    "null",
    "true",
    "false",
    "val",
    "var",
    "fun",
];

const C_FAMILY: &[&str] = &[
    "auto",
    "break",
    "case",
    "char",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extern",
    "float",
    "for",
    "goto",
    "if",
    "inline",
    "int",
    "long",
    "register",
    "return",
    "short",
    "signed",
    "sizeof",
    "static",
    "struct",
    "switch",
    "typedef",
    "union",
    "unsigned",
    "void",
    "volatile",
    "while",
    "include",
    "define",
    "ifdef",
    "ifndef",
    "endif",
    "class",
    "namespace",
    "template",
    "typename",
    "public",
    "private",
    "protected",
    "virtual",
    "new",
    "delete",
    "this",
    "true",
    "false",
    "nullptr",
    "using",
    "bool",
];

const RUBY: &[&str] = &[
    "alias", "and", "begin", "break", "case", "class", "def", "defined", "do", "else", "elsif",
    "end", "ensure", "false", "for", "if", "in", "module", "next", "nil", "not", "or", "redo",
    "rescue", "retry", "return", "self", "super", "then", "true", "undef", "unless", "until",
    "when", "while", "yield", "require",
];

const SHELL: &[&str] = &[
    "if", "then", "else", "elif", "fi", "case", "esac", "for", "while", "until", "do", "done",
    "in", "function", "return", "local", "export",
];

/// Keyword stoplist for a file extension. Unknown extensions have none.
pub fn stoplist(ext: &str) -> &'static [&'static str] {
    match ext {
        "py" | "pyi" => PYTHON,
        "rs" => RUST,
        "js" | "jsx" | "mjs" | "cjs" | "ts" | "tsx" => JAVASCRIPT,
        "go" => GO,
        "java" | "kt" | "kts" | "scala" | "cs" => JAVA,
        "c" | "h" | "cc" | "cpp" | "cxx" | "hpp" | "hh" => C_FAMILY,
        "rb" => RUBY,
        "sh" | "bash" | "zsh" => SHELL,
        _ => &[],
    }
}
