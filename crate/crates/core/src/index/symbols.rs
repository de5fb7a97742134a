//! Symbol extraction.
//!
//! Rust sources go through a real parser (`syn`). Every other language, and
//! Rust files that fail to parse, use the line heuristic: a definition
//! keyword at the start of a line, with the span running to the end of the
//! indentation block or brace block.

use std::sync::OnceLock;

use regex::Regex;
use syn::spanned::Spanned;

use super::{ArtifactKind, ArtifactRecord, LineRange, SymbolKind, SymbolRecord};
use crate::error::{Error, Result};
use crate::lines::{split_lines, trim_eol};
use crate::tokens::extension;

const SIGNATURE_MAX_CHARS: usize = 160;

/// A symbol found in a file, before it is tied to an artifact id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSymbol {
    pub name: String,
    pub symbol_kind: SymbolKind,
    pub span: LineRange,
    pub signature_text: String,
}

/// Symbols of a source artifact, ordered by span.
pub fn extract_symbols(artifact: &ArtifactRecord, contents: &str) -> Result<Vec<SymbolRecord>> {
    if artifact.kind != ArtifactKind::Source {
        return Err(Error::Contract(format!(
            "extract_symbols requires a source artifact, {} is {:?}",
            artifact.path, artifact.kind
        )));
    }
    let (symbols, warning) = extract_symbols_from(&artifact.path, contents);
    if let Some(w) = warning {
        tracing::warn!("{}", w);
    }
    Ok(symbols
        .into_iter()
        .map(|s| SymbolRecord {
            name: s.name,
            symbol_kind: s.symbol_kind,
            artifact_id: artifact.artifact_id.clone(),
            span: s.span,
            signature_text: s.signature_text,
        })
        .collect())
}

/// Extracts symbols by path and contents. The second value is a warning
/// when the syntax-aware tier failed and the heuristic was used instead.
pub fn extract_symbols_from(path: &str, contents: &str) -> (Vec<ExtractedSymbol>, Option<String>) {
    let ext = extension(path);
    let lines = split_lines(contents);
    let mut warning = None;
    let mut symbols = if ext == "rs" {
        match rust_symbols(contents, &lines) {
            Ok(symbols) => symbols,
            Err(e) => {
                warning = Some(format!(
                    "{}: rust parse failed ({}), using line heuristic",
                    path, e
                ));
                heuristic_symbols(&ext, &lines)
            }
        }
    } else {
        heuristic_symbols(&ext, &lines)
    };
    symbols.sort_by(|a, b| (a.span, &a.name).cmp(&(b.span, &b.name)));
    symbols.dedup_by(|a, b| a.span == b.span && a.name == b.name);
    (symbols, warning)
}

fn signature(lines: &[&str], line: u32) -> String {
    let text = lines
        .get(line as usize - 1)
        .map(|l| trim_eol(l).trim())
        .unwrap_or("");
    text.chars().take(SIGNATURE_MAX_CHARS).collect()
}

fn rust_symbols(
    contents: &str,
    lines: &[&str],
) -> std::result::Result<Vec<ExtractedSymbol>, String> {
    let parsed = syn::parse_file(contents);
    let result = parsed.map_err(|e| e.to_string()).map(|file| {
        let mut out = Vec::new();
        collect_items(&file.items, lines, &mut out);
        out
    });
    // Line/column data lives in a thread-local source map; nothing above
    // holds a span past this point.
    proc_macro2::extra::invalidate_current_thread_spans();
    result
}

fn push_rust(
    out: &mut Vec<ExtractedSymbol>,
    lines: &[&str],
    ident: &syn::Ident,
    whole: proc_macro2::Span,
    kind: SymbolKind,
) {
    let start = ident.span().start().line as u32;
    let end = (whole.end().line as u32).max(start);
    let end = end.min(lines.len() as u32);
    if let Some(span) = LineRange::new(start, end) {
        out.push(ExtractedSymbol {
            name: ident.to_string().trim_start_matches("r#").to_string(),
            symbol_kind: kind,
            span,
            signature_text: signature(lines, start),
        });
    }
}

fn collect_items(items: &[syn::Item], lines: &[&str], out: &mut Vec<ExtractedSymbol>) {
    use syn::Item;
    for item in items {
        let span = item.span();
        match item {
            Item::Fn(f) => push_rust(out, lines, &f.sig.ident, span, SymbolKind::Function),
            Item::Struct(s) => push_rust(out, lines, &s.ident, span, SymbolKind::Type),
            Item::Enum(e) => push_rust(out, lines, &e.ident, span, SymbolKind::Type),
            Item::Union(u) => push_rust(out, lines, &u.ident, span, SymbolKind::Type),
            Item::Type(t) => push_rust(out, lines, &t.ident, span, SymbolKind::Type),
            Item::Trait(t) => {
                push_rust(out, lines, &t.ident, span, SymbolKind::Type);
                for ti in &t.items {
                    if let syn::TraitItem::Fn(f) = ti {
                        push_rust(out, lines, &f.sig.ident, ti.span(), SymbolKind::Function);
                    }
                }
            }
            Item::Const(c) => push_rust(out, lines, &c.ident, span, SymbolKind::Constant),
            Item::Static(s) => push_rust(out, lines, &s.ident, span, SymbolKind::Constant),
            Item::Mod(m) => {
                push_rust(out, lines, &m.ident, span, SymbolKind::Other);
                if let Some((_, inner)) = &m.content {
                    collect_items(inner, lines, out);
                }
            }
            Item::Impl(imp) => {
                for ii in &imp.items {
                    match ii {
                        syn::ImplItem::Fn(f) => {
                            push_rust(out, lines, &f.sig.ident, ii.span(), SymbolKind::Function)
                        }
                        syn::ImplItem::Const(c) => {
                            push_rust(out, lines, &c.ident, ii.span(), SymbolKind::Constant)
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Indent,
    /// Indentation block closed by an `end` line at the definition's level.
    IndentEnd,
    Brace,
}

struct Language {
    block: Block,
    rules: Vec<(Regex, SymbolKind)>,
}

/// Definition introducers per language. Each pattern captures `name`.
type LanguageRules = (
    &'static [&'static str],
    Block,
    &'static [(&'static str, SymbolKind)],
);

const TABLE: &[LanguageRules] = &[
    (
        &["py", "pyi"],
        Block::Indent,
        &[
            (
                r"^\s*(?:async\s+)?def\s+(?P<name>\w+)",
                SymbolKind::Function,
            ),
            (r"^\s*class\s+(?P<name>\w+)", SymbolKind::Type),
            (
                r"^(?P<name>[A-Z][A-Z0-9_]*)\s*(?::[^=]+)?=[^=]",
                SymbolKind::Constant,
            ),
        ],
    ),
    (
        &["rb"],
        Block::IndentEnd,
        &[
            (
                r"^\s*def\s+(?:self\.)?(?P<name>\w+[?!]?)",
                SymbolKind::Function,
            ),
            (r"^\s*(?:class|module)\s+(?P<name>\w+)", SymbolKind::Type),
            (
                r"^\s*(?P<name>[A-Z][A-Z0-9_]*)\s*=[^=]",
                SymbolKind::Constant,
            ),
        ],
    ),
    (
        &["js", "jsx", "mjs", "cjs", "ts", "tsx"],
        Block::Brace,
        &[
            (
                r"^\s*(?:export\s+)?(?:default\s+)?(?:async\s+)?function\s*\*?\s*(?P<name>\w+)",
                SymbolKind::Function,
            ),
            (
                r"^\s*(?:export\s+)?(?:default\s+)?(?:abstract\s+)?class\s+(?P<name>\w+)",
                SymbolKind::Type,
            ),
            (
                r"^\s*(?:export\s+)?(?:interface|enum)\s+(?P<name>\w+)",
                SymbolKind::Type,
            ),
            (
                r"^\s*(?:export\s+)?type\s+(?P<name>\w+)\s*(?:<[^>]*>)?\s*=",
                SymbolKind::Type,
            ),
            (
                r"^\s*(?:export\s+)?(?:const|let|var)\s+(?P<name>\w+)\s*(?::[^=]+)?=\s*(?:async\s+)?(?:function\b|\([^)]*\)\s*(?::[^=]+)?=>|\w+\s*=>)",
                SymbolKind::Function,
            ),
            (
                r"^\s*(?:export\s+)?const\s+(?P<name>[A-Z][A-Z0-9_]*)\s*(?::[^=]+)?=",
                SymbolKind::Constant,
            ),
        ],
    ),
    (
        &["go"],
        Block::Brace,
        &[
            (
                r"^func\s+(?:\([^)]*\)\s*)?(?P<name>\w+)",
                SymbolKind::Function,
            ),
            (r"^type\s+(?P<name>\w+)", SymbolKind::Type),
            (r"^const\s+(?P<name>\w+)", SymbolKind::Constant),
        ],
    ),
    (
        &["java", "kt", "kts", "scala", "cs"],
        Block::Brace,
        &[
            (
                r"^\s*(?:(?:public|private|protected|internal|static|final|abstract|sealed|data|open|partial)\s+)*(?:class|interface|enum|record|object|struct)\s+(?P<name>\w+)",
                SymbolKind::Type,
            ),
            (
                r"^\s*(?:(?:public|private|protected|internal|override|suspend|inline|open)\s+)*fun\s+(?:<[^>]*>\s*)?(?P<name>\w+)",
                SymbolKind::Function,
            ),
            (
                r"^\s*(?:(?:public|private|protected|static|final|abstract|synchronized|async|override|virtual)\s+)+[\w<>\[\],.? ]+\s+(?P<name>\w+)\s*\(",
                SymbolKind::Function,
            ),
        ],
    ),
    (
        &["c", "h", "cc", "cpp", "cxx", "hpp", "hh"],
        Block::Brace,
        &[
            (r"^\s*#\s*define\s+(?P<name>\w+)", SymbolKind::Constant),
            (
                r"^\s*(?:typedef\s+)?(?:struct|class|enum|union)\s+(?P<name>\w+)\s*(?:[:{]|$)",
                SymbolKind::Type,
            ),
            (
                r"^(?:static\s+|inline\s+|extern\s+|const\s+|unsigned\s+)*[A-Za-z_][\w:<>]*[\s*&]+(?P<name>[A-Za-z_]\w*)\s*\([^;]*$",
                SymbolKind::Function,
            ),
        ],
    ),
    (
        &["rs"],
        Block::Brace,
        &[
            (
                r#"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:const\s+)?(?:async\s+)?(?:unsafe\s+)?(?:extern\s+(?:"[^"]*"\s+)?)?fn\s+(?P<name>\w+)"#,
                SymbolKind::Function,
            ),
            (
                r"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:struct|enum|union|trait|type)\s+(?P<name>\w+)",
                SymbolKind::Type,
            ),
            (
                r"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:const|static)\s+(?:mut\s+)?(?P<name>\w+)\s*:",
                SymbolKind::Constant,
            ),
            (
                r"^\s*(?:pub(?:\([^)]*\))?\s+)?mod\s+(?P<name>\w+)",
                SymbolKind::Other,
            ),
        ],
    ),
    (
        &["sh", "bash", "zsh"],
        Block::Brace,
        &[
            (r"^\s*function\s+(?P<name>[\w-]+)", SymbolKind::Function),
            (r"^\s*(?P<name>[\w-]+)\s*\(\)\s*\{?", SymbolKind::Function),
        ],
    ),
];

const C_NON_FUNCTIONS: &[&str] = &["if", "for", "while", "switch", "return", "sizeof", "else"];

fn language(ext: &str) -> Option<&'static Language> {
    static COMPILED: OnceLock<Vec<(&'static [&'static str], Language)>> = OnceLock::new();
    let compiled = COMPILED.get_or_init(|| {
        TABLE
            .iter()
            .map(|(exts, block, rules)| {
                let rules = rules
                    .iter()
                    .map(|(p, k)| (Regex::new(p).expect("symbol pattern compiles"), *k))
                    .collect();
                (
                    *exts,
                    Language {
                        block: *block,
                        rules,
                    },
                )
            })
            .collect()
    });
    compiled
        .iter()
        .find(|(exts, _)| exts.contains(&ext))
        .map(|(_, lang)| lang)
}

fn heuristic_symbols(ext: &str, lines: &[&str]) -> Vec<ExtractedSymbol> {
    let Some(lang) = language(ext) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, raw) in lines.iter().enumerate() {
        let line = trim_eol(raw);
        if is_comment(line) {
            continue;
        }
        for (re, kind) in &lang.rules {
            let Some(caps) = re.captures(line) else {
                continue;
            };
            let name = caps["name"].to_string();
            if C_NON_FUNCTIONS.contains(&name.as_str()) {
                break;
            }
            let start = i as u32 + 1;
            let end = match lang.block {
                // preprocessor lines end at the last backslash continuation
                _ if line.trim_start().starts_with('#') => macro_end(lines, i),
                Block::Indent => indent_block_end(lines, i, false),
                Block::IndentEnd => indent_block_end(lines, i, true),
                Block::Brace => brace_block_end(lines, i),
            };
            out.push(ExtractedSymbol {
                name,
                symbol_kind: *kind,
                span: LineRange { start, end },
                signature_text: signature(lines, start),
            });
            break;
        }
    }
    out
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("//")
        || t.starts_with('#') && !t.starts_with("#define") && !t.starts_with("# define")
        || t.starts_with("/*")
        || t.starts_with('*')
}

fn indent_of(line: &str) -> usize {
    line.chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

/// Last line of the block opened at `def` (0-based), as a 1-based number.
fn indent_block_end(lines: &[&str], def: usize, closing_end: bool) -> u32 {
    let base = indent_of(lines[def]);
    let mut end = def;
    let mut i = def + 1;
    // continuation of a multi-line signature
    let mut depth = paren_delta(trim_eol(lines[def]));
    while depth > 0 && i < lines.len() {
        depth += paren_delta(trim_eol(lines[i]));
        end = i;
        i += 1;
    }
    while i < lines.len() {
        let line = trim_eol(lines[i]);
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        if indent_of(line) > base {
            end = i;
            i += 1;
            continue;
        }
        if closing_end && indent_of(line) == base && line.trim() == "end" {
            end = i;
        }
        break;
    }
    end as u32 + 1
}

fn macro_end(lines: &[&str], def: usize) -> u32 {
    let mut end = def;
    while end + 1 < lines.len() && trim_eol(lines[end]).ends_with('\\') {
        end += 1;
    }
    end as u32 + 1
}

fn paren_delta(line: &str) -> i32 {
    let mut d = 0;
    for c in line.chars() {
        match c {
            '(' | '[' => d += 1,
            ')' | ']' => d -= 1,
            _ => {}
        }
    }
    d
}

/// Last line of the brace block opened at or after `def`. A statement that
/// ends with `;` before any `{` is a one-line (or multi-line) declaration.
fn brace_block_end(lines: &[&str], def: usize) -> u32 {
    let mut depth = 0i32;
    let mut opened = false;
    for (i, raw) in lines.iter().enumerate().skip(def) {
        let mut chars = trim_eol(raw).chars().peekable();
        let mut quote: Option<char> = None;
        while let Some(c) = chars.next() {
            if let Some(q) = quote {
                if c == '\\' {
                    chars.next();
                } else if c == q {
                    quote = None;
                }
                continue;
            }
            match c {
                '"' | '\'' | '`' => quote = Some(c),
                '/' if chars.peek() == Some(&'/') => break,
                '{' => {
                    depth += 1;
                    opened = true;
                }
                '}' => {
                    depth -= 1;
                    if opened && depth <= 0 {
                        return i as u32 + 1;
                    }
                }
                ';' if !opened && depth == 0 => return i as u32 + 1,
                _ => {}
            }
        }
        // a line-ending quote that never closed is probably an apostrophe
        if !opened && i > def + 8 {
            return def as u32 + 1;
        }
    }
    if opened {
        lines.len() as u32
    } else {
        def as u32 + 1
    }
}
