//! Change-shape detection for the template backend's alternatives.
//!
//! Detectors run in a fixed order over the added lines and the first match
//! names the shape. Each shape keys one entry of the bundled alternatives
//! table; `generic` is the fallback.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{Alternative, Tradeoff};
use crate::index::SymbolKind;
use crate::ingest::{FileModification, ModificationKind};

const TABLE: &str = include_str!("../../data/alternatives.json");

struct Detectors {
    inheritance: Regex,
    loop_head: Regex,
    accumulate: Regex,
    comprehension: Regex,
    exception: Regex,
    branch: Regex,
}

fn detectors() -> &'static Detectors {
    static D: OnceLock<Detectors> = OnceLock::new();
    D.get_or_init(|| Detectors {
        inheritance: Regex::new(
            r"^\s*(?:export\s+)?(?:(?:public|abstract|final)\s+)*class\s+\w+\s*(?:\(\s*(?:[A-Za-z_][\w.]*)\s*[,)]|(?:<[^>]*>)?\s+extends\s+\w+)",
        )
        .unwrap(),
        loop_head: Regex::new(r"^\s*for\b").unwrap(),
        accumulate: Regex::new(r"\.(?:append|push|add|extend|insert)\(|\+=").unwrap(),
        comprehension: Regex::new(r"[\[{(][^\]})]*\bfor\b[^\]})]*\bin\b|\.(?:map|filter|reduce)\(").unwrap(),
        exception: Regex::new(r"^\s*(?:try\s*[:{]|except\b|catch\b|\}\s*catch\b|rescue\b)").unwrap(),
        branch: Regex::new(r"^\s*(?:elif\b|else\s+if\b|\}\s*else\s+if\b|case\b|when\b)").unwrap(),
    })
}

/// Name of the first matching change shape.
pub fn detect_change_shape(modification: &FileModification) -> &'static str {
    if modification.kind == ModificationKind::Deleted {
        return "deleted_file";
    }
    let d = detectors();
    let added: Vec<&str> = modification
        .hunks
        .iter()
        .flat_map(|h| h.added_lines())
        .collect();
    let any = |re: &Regex| added.iter().any(|l| re.is_match(l));
    let introduced = |kind: SymbolKind| {
        modification
            .introduced_symbols
            .iter()
            .any(|s| s.symbol_kind == kind)
    };
    if added
        .iter()
        .any(|l| d.inheritance.is_match(l) && !l.contains("(object)"))
    {
        "inheritance"
    } else if any(&d.loop_head) && any(&d.accumulate) {
        "loop_accumulation"
    } else if any(&d.comprehension) {
        "comprehension"
    } else if any(&d.exception) {
        "exception_handling"
    } else if added.iter().filter(|l| d.branch.is_match(l)).count() >= 3 {
        "conditional_chain"
    } else if introduced(SymbolKind::Function) {
        "new_function"
    } else if introduced(SymbolKind::Constant) {
        "new_constant"
    } else if modification.kind == ModificationKind::Created {
        "new_file"
    } else {
        "generic"
    }
}

fn table() -> &'static BTreeMap<String, Alternative> {
    static T: OnceLock<BTreeMap<String, Alternative>> = OnceLock::new();
    T.get_or_init(|| serde_json::from_str(TABLE).expect("bundled alternatives table parses"))
}

/// The table entry for `shape`, with `{path}` filled in.
pub fn alternative_for(shape: &str, path: &str) -> Alternative {
    let entry = table()
        .get(shape)
        .or_else(|| table().get("generic"))
        .expect("alternatives table has a generic entry");
    Alternative {
        title: entry.title.clone(),
        description: entry.description.replace("{path}", path),
        tradeoffs: entry
            .tradeoffs
            .iter()
            .map(|t| Tradeoff {
                aspect: t.aspect.clone(),
                comparison: t.comparison.replace("{path}", path),
            })
            .collect(),
    }
}
