//! Import/include edges from per-language line patterns. Targets are
//! resolved against the set of indexed paths only; nothing outside the
//! snapshot (packages, system headers) produces an edge.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::lines::{split_lines, trim_eol};
use crate::tokens::extension;

/// One import statement resolved to an indexed path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResolvedReference {
    pub line: u32,
    pub target: String,
}

struct Patterns {
    py_import: Regex,
    py_from: Regex,
    js: Regex,
    c_include: Regex,
    rs_mod: Regex,
    rs_use: Regex,
    java_import: Regex,
    rb_require: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        py_import: Regex::new(
            r"^\s*import\s+([\w\.]+(?:\s+as\s+\w+)?(?:\s*,\s*[\w\.]+(?:\s+as\s+\w+)?)*)",
        )
        .unwrap(),
        py_from: Regex::new(r"^\s*from\s+(\.*)([\w\.]*)\s+import\s+\(?\s*([\w\s,\*]+)").unwrap(),
        js: Regex::new(
            r#"(?:\bfrom\s+|\bimport\s+|\brequire\s*\(\s*|\bimport\s*\(\s*)["']([^"']+)["']"#,
        )
        .unwrap(),
        c_include: Regex::new(r#"^\s*#\s*include\s+"([^"]+)""#).unwrap(),
        rs_mod: Regex::new(r"^\s*(?:pub(?:\([^)]*\))?\s+)?mod\s+(\w+)\s*;").unwrap(),
        rs_use: Regex::new(r"^\s*(?:pub(?:\([^)]*\))?\s+)?use\s+((?:crate|super|self)(?:::\w+)+)")
            .unwrap(),
        java_import: Regex::new(r"^\s*import\s+(?:static\s+)?([\w\.]+)\s*;?").unwrap(),
        rb_require: Regex::new(r#"^\s*require_relative\s+["']([^"']+)["']"#).unwrap(),
    })
}

fn parent(path: &str) -> &str {
    path.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

fn join(dir: &str, rel: &str) -> Option<String> {
    let mut parts: Vec<&str> = if dir.is_empty() {
        Vec::new()
    } else {
        dir.split('/').collect()
    };
    for seg in rel.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

/// Picks the candidate closest to `from` when several indexed paths match.
fn best_suffix_match(from: &str, suffix: &str, known: &BTreeSet<String>) -> Option<String> {
    let with_slash = format!("/{}", suffix);
    known
        .iter()
        .filter(|p| p.as_str() == suffix || p.ends_with(&with_slash))
        .max_by_key(|p| {
            let common = p
                .split('/')
                .zip(from.split('/'))
                .take_while(|(a, b)| a == b)
                .count();
            (common, std::cmp::Reverse((*p).clone()))
        })
        .cloned()
}

fn first_known(
    candidates: impl IntoIterator<Item = String>,
    known: &BTreeSet<String>,
) -> Option<String> {
    candidates.into_iter().find(|c| known.contains(c))
}

/// Import statements in `contents` that resolve to one of `known` paths.
pub fn extract_reference_edges(
    from: &str,
    contents: &str,
    known: &BTreeSet<String>,
) -> Vec<ResolvedReference> {
    let ext = extension(from);
    let p = patterns();
    let dir = parent(from);
    let mut out = Vec::new();
    for (i, raw) in split_lines(contents).into_iter().enumerate() {
        let line = trim_eol(raw);
        let mut targets: Vec<String> = Vec::new();
        match ext.as_str() {
            "py" | "pyi" => {
                if let Some(c) = p.py_from.captures(line) {
                    let dots = c[1].len();
                    let module = c[2].replace('.', "/");
                    let names: Vec<&str> = c[3]
                        .split(',')
                        .map(|n| n.split_whitespace().next().unwrap_or(""))
                        .filter(|n| !n.is_empty() && *n != "*")
                        .collect();
                    let mut mods = vec![module.clone()];
                    for n in names {
                        mods.push(if module.is_empty() {
                            n.to_string()
                        } else {
                            format!("{}/{}", module, n)
                        });
                    }
                    for m in mods.into_iter().filter(|m| !m.is_empty()) {
                        let cands = [format!("{}.py", m), format!("{}/__init__.py", m)];
                        let found = if dots > 0 {
                            let up = "../".repeat(dots - 1);
                            first_known(
                                cands
                                    .iter()
                                    .filter_map(|c| join(dir, &format!("{}{}", up, c))),
                                known,
                            )
                        } else {
                            cands.iter().find_map(|c| best_suffix_match(from, c, known))
                        };
                        targets.extend(found);
                    }
                } else if let Some(c) = p.py_import.captures(line) {
                    for part in c[1].split(',') {
                        let m = part
                            .split_whitespace()
                            .next()
                            .unwrap_or("")
                            .replace('.', "/");
                        if m.is_empty() {
                            continue;
                        }
                        let cands = [format!("{}.py", m), format!("{}/__init__.py", m)];
                        targets
                            .extend(cands.iter().find_map(|c| best_suffix_match(from, c, known)));
                    }
                }
            }
            "js" | "jsx" | "mjs" | "cjs" | "ts" | "tsx" => {
                for c in p.js.captures_iter(line) {
                    let specifier = &c[1];
                    if !specifier.starts_with('.') {
                        continue;
                    }
                    let Some(base) = join(dir, specifier) else {
                        continue;
                    };
                    let mut cands = vec![base.clone()];
                    for e in ["ts", "tsx", "js", "jsx", "mjs", "cjs"] {
                        cands.push(format!("{}.{}", base, e));
                    }
                    for e in ["ts", "tsx", "js", "jsx"] {
                        cands.push(format!("{}/index.{}", base, e));
                    }
                    targets.extend(first_known(cands, known));
                }
            }
            "c" | "h" | "cc" | "cpp" | "cxx" | "hpp" | "hh" => {
                if let Some(c) = p.c_include.captures(line) {
                    let inc = &c[1];
                    let local = join(dir, inc).filter(|j| known.contains(j));
                    targets.extend(local.or_else(|| best_suffix_match(from, inc, known)));
                }
            }
            "rs" => {
                let module_dir = rust_module_dir(from);
                if let Some(c) = p.rs_mod.captures(line) {
                    let name = &c[1];
                    let cands = [
                        join_dir(&module_dir, &format!("{}.rs", name)),
                        join_dir(&module_dir, &format!("{}/mod.rs", name)),
                    ];
                    targets.extend(first_known(cands, known));
                } else if let Some(c) = p.rs_use.captures(line) {
                    targets.extend(resolve_rust_use(from, &module_dir, &c[1], known));
                }
            }
            "java" | "kt" | "scala" => {
                if let Some(c) = p.java_import.captures(line) {
                    let path = c[1].replace('.', "/");
                    for e in ["java", "kt", "scala"] {
                        if let Some(t) = best_suffix_match(from, &format!("{}.{}", path, e), known)
                        {
                            targets.push(t);
                            break;
                        }
                    }
                }
            }
            "rb" => {
                if let Some(c) = p.rb_require.captures(line) {
                    let specifier = c[1].trim_end_matches(".rb");
                    targets
                        .extend(join(dir, &format!("{}.rb", specifier)).filter(|t| known.contains(t)));
                }
            }
            _ => {}
        }
        for target in targets {
            if target != from {
                out.push(ResolvedReference {
                    line: i as u32 + 1,
                    target,
                });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn join_dir(dir: &str, rel: &str) -> String {
    if dir.is_empty() {
        rel.to_string()
    } else {
        format!("{}/{}", dir, rel)
    }
}

/// Directory holding the child modules of the module defined by `path`.
fn rust_module_dir(path: &str) -> String {
    let dir = parent(path);
    let file = path.rsplit('/').next().unwrap_or(path);
    match file {
        "mod.rs" | "lib.rs" | "main.rs" => dir.to_string(),
        _ => join_dir(dir, file.trim_end_matches(".rs")),
    }
}

fn resolve_rust_use(
    from: &str,
    module_dir: &str,
    use_path: &str,
    known: &BTreeSet<String>,
) -> Option<String> {
    let mut segs = use_path.split("::");
    let head = segs.next()?;
    let rest: Vec<&str> = segs.collect();
    let base = match head {
        "crate" => {
            // nearest ancestor `src` directory is the crate root
            let mut dir = parent(from);
            loop {
                if dir == "src" || dir.ends_with("/src") {
                    break dir.to_string();
                }
                if dir.is_empty() {
                    break parent(from).to_string();
                }
                dir = parent(dir);
            }
        }
        "self" => module_dir.to_string(),
        "super" => parent(module_dir).to_string(),
        _ => return None,
    };
    // longest module path that exists wins
    for n in (1..=rest.len()).rev() {
        let m = rest[..n].join("/");
        let cands = [
            join_dir(&base, &format!("{}.rs", m)),
            join_dir(&base, &format!("{}/mod.rs", m)),
        ];
        if let Some(t) = first_known(cands, known) {
            return Some(t);
        }
    }
    None
}
