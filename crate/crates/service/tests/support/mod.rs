//! Synthetic repositories and sessions with known ground truth.
//!
//! Every generated line records the lowercase identifier parts it was built
//! from, so oracles never have to tokenize text themselves.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use lens_core::ingest::{diff_texts, render_unified};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

pub const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "omega", "cache", "user", "load", "store", "fetch", "parse",
    "token", "index", "record", "query", "value", "entry", "table", "count", "limit", "frame",
    "graph", "node", "edge", "scope", "batch", "merge", "split", "trace", "profile",
];

const DIRS: &[&str] = &["", "pkg", "pkg/sub", "lib", "docs"];

#[derive(Debug, Clone)]
pub struct Line {
    pub text: String,
    /// Identifier parts on this line, lowercase, in order.
    pub parts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthFile {
    pub path: String,
    pub doc: bool,
    pub lines: Vec<Line>,
}

impl SynthFile {
    pub fn contents(&self) -> String {
        self.lines.iter().map(|l| format!("{}\n", l.text)).collect()
    }

    pub fn tokens(&self) -> BTreeSet<String> {
        self.lines
            .iter()
            .flat_map(|l| l.parts.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthRepo {
    pub files: Vec<SynthFile>,
    /// Import edges `(from, to)` by path.
    pub edges: BTreeSet<(String, String)>,
}

impl SynthRepo {
    pub fn file(&self, path: &str) -> &SynthFile {
        self.files.iter().find(|f| f.path == path).unwrap()
    }

    /// Line text → identifier parts, over every file.
    pub fn parts_of_text(&self) -> BTreeMap<String, Vec<String>> {
        self.files
            .iter()
            .flat_map(|f| f.lines.iter().map(|l| (l.text.clone(), l.parts.clone())))
            .collect()
    }

    pub fn write_to(&self, root: &Path) {
        for f in &self.files {
            let path = root.join(&f.path);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(path, f.contents()).unwrap();
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().unwrap().to_uppercase().chain(c).collect()
}

/// A random identifier and its parts.
pub fn identifier(rng: &mut impl Rng) -> (String, Vec<String>) {
    let n = rng.gen_range(1..=3);
    let parts: Vec<String> = (0..n)
        .map(|_| WORDS.choose(rng).unwrap().to_string())
        .collect();
    let text = match rng.gen_range(0..4) {
        0 => parts.join("_"),
        1 => {
            let mut s = parts[0].clone();
            for p in &parts[1..] {
                s.push_str(&capitalize(p));
            }
            s
        }
        2 => parts.iter().map(|p| capitalize(p)).collect(),
        _ => parts
            .iter()
            .map(|p| p.to_uppercase())
            .collect::<Vec<_>>()
            .join("_"),
    };
    (text, parts)
}

fn module_of(path: &str) -> (String, Vec<String>) {
    let stem = path.strip_suffix(".py").unwrap();
    let parts: Vec<String> = stem.split('/').map(str::to_string).collect();
    (parts.join("."), parts)
}

fn code_line(rng: &mut impl Rng, py_paths: &[String], me: &str) -> (Line, Option<String>) {
    let line = |text: String, parts: Vec<Vec<String>>| Line {
        text,
        parts: parts.concat(),
    };
    match rng.gen_range(0..8) {
        0 => {
            let (a, pa) = identifier(rng);
            let (b, pb) = identifier(rng);
            let (c, pc) = identifier(rng);
            (
                line(format!("{} = {}({}, 42)", a, b, c), vec![pa, pb, pc]),
                None,
            )
        }
        1 => {
            let (a, pa) = identifier(rng);
            let (b, pb) = identifier(rng);
            (line(format!("def {}({}):", a, b), vec![pa, pb]), None)
        }
        2 => {
            let (a, pa) = identifier(rng);
            (line(format!("    return {} + 0x1F", a), vec![pa]), None)
        }
        3 => {
            let others: Vec<&String> = py_paths.iter().filter(|p| p.as_str() != me).collect();
            match others.choose(rng) {
                Some(target) => {
                    let (module, parts) = module_of(target);
                    (
                        line(format!("import {}", module), vec![parts]),
                        Some((*target).clone()),
                    )
                }
                None => (line(String::new(), vec![]), None),
            }
        }
        4 => {
            let (a, pa) = identifier(rng);
            let (b, pb) = identifier(rng);
            (
                line(format!("# {} and {} is not None", a, b), vec![pa, pb]),
                None,
            )
        }
        5 => {
            let (a, pa) = identifier(rng);
            let (b, pb) = identifier(rng);
            let (c, pc) = identifier(rng);
            (
                line(
                    format!("{}.{}({}=\"text\")", a, b, c),
                    vec![pa, pb, pc, vec!["text".into()]],
                ),
                None,
            )
        }
        6 => (line(String::new(), vec![]), None),
        _ => {
            let (a, pa) = identifier(rng);
            (line(format!("class {}:", a), vec![pa]), None)
        }
    }
}

fn doc_line(rng: &mut impl Rng) -> Line {
    let (a, pa) = identifier(rng);
    let (b, pb) = identifier(rng);
    if rng.gen_bool(0.2) {
        return Line {
            text: String::new(),
            parts: vec![],
        };
    }
    Line {
        text: format!("- `{}`: {} 7.", a, b),
        parts: [pa, pb].concat(),
    }
}

/// A repository of `n` files with unique basenames.
pub fn repo(rng: &mut impl Rng, n: usize) -> SynthRepo {
    let mut specs: Vec<(String, bool)> = (0..n)
        .map(|i| {
            let doc = rng.gen_bool(0.2);
            let dir = if doc {
                "docs"
            } else {
                DIRS.choose(rng).unwrap()
            };
            let name = if doc {
                format!("d{}.md", i)
            } else {
                format!("f{}.py", i)
            };
            let path = if dir.is_empty() {
                name
            } else {
                format!("{}/{}", dir, name)
            };
            (path, doc)
        })
        .collect();
    specs.sort();
    let py_paths: Vec<String> = specs
        .iter()
        .filter(|(_, d)| !d)
        .map(|(p, _)| p.clone())
        .collect();
    let mut edges = BTreeSet::new();
    let mut files = Vec::new();
    for (path, doc) in specs {
        let len = rng.gen_range(0..30);
        let mut lines = Vec::new();
        for _ in 0..len {
            if doc {
                lines.push(doc_line(rng));
            } else {
                let (line, target) = code_line(rng, &py_paths, &path);
                if let Some(t) = target {
                    edges.insert((path.clone(), t));
                }
                lines.push(line);
            }
        }
        files.push(SynthFile { path, doc, lines });
    }
    // an occasional exact duplicate produces score ties
    if files.len() >= 2 && rng.gen_bool(0.5) {
        let src = files[rng.gen_range(0..files.len())].clone();
        if !src.doc {
            let dir = src
                .path
                .rsplit_once('/')
                .map(|(d, _)| format!("{}/", d))
                .unwrap_or_default();
            let path = format!("{}f{}.py", dir, n + 1);
            for (from, to) in edges.clone() {
                if from == src.path {
                    edges.insert((path.clone(), to));
                }
            }
            files.push(SynthFile { path, ..src });
            files.sort_by(|a, b| a.path.cmp(&b.path));
        }
    }
    SynthRepo { files, edges }
}

/// Removes a random subset of lines, returning the pre-image text.
pub fn thin_out(rng: &mut impl Rng, file: &SynthFile) -> String {
    file.lines
        .iter()
        .filter(|_| rng.gen_bool(0.6))
        .map(|l| format!("{}\n", l.text))
        .collect()
}

/// A planned session: events plus the expected first-touch path order.
pub struct SynthSession {
    pub log: Value,
    pub expected_paths: Vec<String>,
}

/// A session over `repo` (the post-state). Some files are created, some
/// edited (possibly twice) and some deleted; deleted files are removed from
/// `repo` so it stays the post-state.
pub fn session(
    rng: &mut impl Rng,
    repo: &mut SynthRepo,
    id: &str,
    max_mods: usize,
) -> SynthSession {
    let mut paths: Vec<String> = repo.files.iter().map(|f| f.path.clone()).collect();
    paths.shuffle(rng);
    let count = rng.gen_range(1..=max_mods.min(paths.len()).max(1));
    // (event without seq, deferred to the end)
    let mut planned: Vec<(Value, bool)> = Vec::new();
    let mut expected = Vec::new();
    let mut deleted = Vec::new();
    for path in paths.into_iter().take(count) {
        let post = repo.file(&path).contents();
        match rng.gen_range(0..4) {
            0 => {
                let diff = render_unified(&diff_texts("", &post, 3));
                planned.push((
                    json!({"kind": "file_create", "path": path, "diff": diff}),
                    false,
                ));
            }
            1 if !post.is_empty() => {
                let diff = render_unified(&diff_texts(&post, "", 3));
                planned.push((
                    json!({"kind": "file_delete", "path": path, "diff": diff}),
                    false,
                ));
                deleted.push(path.clone());
            }
            2 => {
                // edited twice, the second time after every other file
                let file = repo.file(&path).clone();
                let pre = thin_out(rng, &file);
                let mid = thin_out(rng, &file);
                let first = render_unified(&diff_texts(&pre, &mid, 3));
                let second = render_unified(&diff_texts(&mid, &post, 3));
                planned.push((
                    json!({"kind": "file_edit", "path": path, "diff": first}),
                    false,
                ));
                planned.push((
                    json!({"kind": "file_edit", "path": path, "diff": second}),
                    true,
                ));
            }
            _ => {
                let pre = thin_out(rng, repo.file(&path));
                let diff = render_unified(&diff_texts(&pre, &post, 3));
                planned.push((
                    json!({"kind": "file_edit", "path": path, "diff": diff}),
                    false,
                ));
            }
        }
        if rng.gen_bool(0.3) {
            planned.push((json!({"kind": "tool_note", "note": "looked around"}), false));
        }
        expected.push(path);
    }
    let (now, later): (Vec<_>, Vec<_>) = planned.into_iter().partition(|(_, deferred)| !deferred);
    let mut seq = 0u64;
    let mut events: Vec<Value> = Vec::new();
    for (mut event, _) in now.into_iter().chain(later) {
        seq += rng.gen_range(1..3);
        event["seq"] = json!(seq);
        events.push(event);
    }
    repo.files.retain(|f| !deleted.contains(&f.path));
    repo.edges
        .retain(|(a, b)| !deleted.contains(a) && !deleted.contains(b));
    // log order differs from seq order on purpose
    events.shuffle(rng);
    SynthSession {
        log: json!({"session_id": id, "task_prompt": "synthetic task", "repo_root": "/unused", "events": events}),
        expected_paths: expected,
    }
}
