use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::refs::extract_reference_edges;
use super::symbols::extract_symbols_from;
use super::{
    content_digest, snapshot_digest, ArtifactId, ArtifactKind, ArtifactRecord, IndexDocument,
    LineRange, Posting, ReferenceEdge, RepoIndex, SymbolRecord, INDEX_VERSION,
};
use crate::error::{Error, Result};
use crate::lines::{line_count, split_lines};
use crate::tokens::{canonical_tokens, extension};

/// Name of the per-repository ignore file.
pub const IGNORE_FILE: &str = ".lensignore";

/// Extension → artifact kind. Extensions not listed are source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KindTable(pub BTreeMap<String, ArtifactKind>);

impl Default for KindTable {
    fn default() -> Self {
        let mut table = BTreeMap::new();
        for ext in ["md", "rst", "txt"] {
            table.insert(ext.to_string(), ArtifactKind::Documentation);
        }
        for ext in ["json", "yaml", "yml", "toml", "ini"] {
            table.insert(ext.to_string(), ArtifactKind::Config);
        }
        KindTable(table)
    }
}

impl KindTable {
    pub fn classify(&self, path: &str) -> ArtifactKind {
        self.0
            .get(&extension(path))
            .copied()
            .unwrap_or(ArtifactKind::Source)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    /// Extra glob patterns on top of `.lensignore`.
    pub ignore: Vec<String>,
    /// Paths indexed even when an ignore rule matches them.
    pub force_include: Vec<String>,
    pub kinds: KindTable,
}

struct IgnoreRules {
    full: GlobSet,
    component: GlobSet,
}

impl IgnoreRules {
    /// Patterns containing `/` match the whole relative path; the others
    /// match any single path component, like a `.gitignore` basename rule.
    fn new(patterns: &[String]) -> Result<Self> {
        let mut full = GlobSetBuilder::new();
        let mut component = GlobSetBuilder::new();
        for raw in patterns {
            let p = raw.trim();
            if p.is_empty() || p.starts_with('#') {
                continue;
            }
            let p = p.trim_end_matches('/');
            let p = p.strip_prefix('/').unwrap_or(p);
            let glob = |s: &str| {
                globset::GlobBuilder::new(s)
                    .literal_separator(true)
                    .build()
                    .map_err(|e| Error::Validation(format!("bad ignore pattern {:?}: {}", raw, e)))
            };
            if p.contains('/') {
                full.add(glob(p)?);
                full.add(glob(&format!("{}/**", p))?);
            } else {
                component.add(Glob::new(p).map_err(|e| {
                    Error::Validation(format!("bad ignore pattern {:?}: {}", raw, e))
                })?);
            }
        }
        let build = |b: GlobSetBuilder| {
            b.build()
                .map_err(|e| Error::Validation(format!("ignore rules: {}", e)))
        };
        Ok(IgnoreRules {
            full: build(full)?,
            component: build(component)?,
        })
    }

    fn ignores(&self, rel: &str) -> bool {
        self.full.is_match(rel) || rel.split('/').any(|c| self.component.is_match(c))
    }
}

fn read_ignore_file(root: &Path) -> Result<Vec<String>> {
    let path = root.join(IGNORE_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(text.lines().map(str::to_string).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

struct FileScan {
    record: ArtifactRecord,
    contents: Arc<str>,
    symbols: Vec<SymbolRecord>,
    tokens: Vec<(String, u32)>,
    warning: Option<String>,
}

/// Indexes every non-ignored UTF-8 text file under `root`. The `.git`
/// directory is always skipped.
pub fn scan_repository(root: &Path, options: &ScanOptions) -> Result<RepoIndex> {
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;

    let mut patterns = read_ignore_file(root)?;
    patterns.extend(options.ignore.iter().cloned());
    let rules = IgnoreRules::new(&patterns)?;
    let forced: BTreeSet<&str> = options.force_include.iter().map(String::as_str).collect();

    let mut warnings = Vec::new();
    let mut files: Vec<(String, std::path::PathBuf)> = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            if e.depth() == 0 {
                return true;
            }
            let rel = relative(root, e.path());
            if e.file_type().is_dir() {
                e.file_name() != ".git"
                    && (!rules.ignores(&rel)
                        || forced.iter().any(|f| f.starts_with(&format!("{}/", rel))))
            } else {
                !rules.ignores(&rel) || forced.contains(rel.as_str())
            }
        });
    for entry in walker {
        match entry {
            Ok(e) if e.file_type().is_file() => {
                files.push((relative(root, e.path()), e.path().to_path_buf()))
            }
            Ok(_) => {}
            Err(e) => warnings.push(format!("walk: {}", e)),
        }
    }
    files.retain(|(rel, _)| rel != IGNORE_FILE);

    let scanned: Vec<std::result::Result<FileScan, String>> = files
        .par_iter()
        .map(|(rel, full)| scan_file(rel, full, &options.kinds))
        .collect();

    let mut indexed: Vec<FileScan> = Vec::new();
    for result in scanned {
        match result {
            Ok(scan) => indexed.push(scan),
            Err(w) => warnings.push(w),
        }
    }
    build_index(indexed, warnings)
}

fn build_index(mut indexed: Vec<FileScan>, mut warnings: Vec<String>) -> Result<RepoIndex> {
    indexed.sort_by(|a, b| a.record.path.cmp(&b.record.path));
    let known: BTreeSet<String> = indexed.iter().map(|s| s.record.path.clone()).collect();
    let mut doc = IndexDocument {
        version: INDEX_VERSION,
        snapshot_id: String::new(),
        artifacts: Vec::new(),
        symbols: Vec::new(),
        postings: BTreeMap::new(),
        reference_edges: BTreeSet::new(),
    };
    let mut contents = BTreeMap::new();
    // one edge per (from, to): the first import line
    let mut first_edges: BTreeMap<(ArtifactId, ArtifactId), ReferenceEdge> = BTreeMap::new();
    for scan in indexed {
        if let Some(w) = scan.warning {
            warnings.push(w);
        }
        let id = scan.record.artifact_id.clone();
        if scan.record.kind == ArtifactKind::Source {
            for r in extract_reference_edges(&scan.record.path, &scan.contents, &known) {
                let to = ArtifactId::for_path(&r.target);
                first_edges
                    .entry((id.clone(), to.clone()))
                    .or_insert(ReferenceEdge {
                        from: id.clone(),
                        to,
                        line: r.line,
                    });
            }
        }
        for (token, line) in scan.tokens {
            doc.postings.entry(token).or_default().insert(Posting {
                artifact_id: id.clone(),
                span: LineRange::single(line),
            });
        }
        doc.symbols.extend(scan.symbols);
        contents.insert(id, scan.contents);
        doc.artifacts.push(scan.record);
    }
    doc.reference_edges = first_edges.into_values().collect();
    doc.snapshot_id = snapshot_digest(
        doc.artifacts
            .iter()
            .map(|a| (a.path.as_str(), a.content_digest.as_str())),
    );
    RepoIndex::assemble(doc, contents, warnings)
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn scan_file(rel: &str, full: &Path, kinds: &KindTable) -> std::result::Result<FileScan, String> {
    let bytes = std::fs::read(full).map_err(|e| format!("{}: unreadable ({}), skipped", rel, e))?;
    if bytes.contains(&0) {
        return Err(format!("{}: binary content, skipped", rel));
    }
    let text = String::from_utf8(bytes).map_err(|_| format!("{}: not UTF-8, skipped", rel))?;
    Ok(index_text(rel, text, kinds))
}

fn index_text(rel: &str, text: String, kinds: &KindTable) -> FileScan {
    let id = ArtifactId::for_path(rel);
    let kind = kinds.classify(rel);
    let record = ArtifactRecord {
        artifact_id: id.clone(),
        path: rel.to_string(),
        kind,
        line_count: line_count(&text) as u32,
        content_digest: content_digest(text.as_bytes()),
    };
    let ext = extension(rel);
    let mut tokens = Vec::new();
    for (i, line) in split_lines(&text).into_iter().enumerate() {
        for t in canonical_tokens(line, &ext) {
            tokens.push((t, i as u32 + 1));
        }
    }
    let (symbols, warning) = if kind == ArtifactKind::Source {
        let (found, warning) = extract_symbols_from(rel, &text);
        let symbols = found
            .into_iter()
            .map(|s| SymbolRecord {
                name: s.name,
                symbol_kind: s.symbol_kind,
                artifact_id: id.clone(),
                span: s.span,
                signature_text: s.signature_text,
            })
            .collect();
        (symbols, warning)
    } else {
        (Vec::new(), None)
    };
    FileScan {
        record,
        contents: Arc::from(text),
        symbols,
        tokens,
        warning,
    }
}

/// Builds an index from in-memory `(path, contents)` pairs.
pub fn index_from_files<'a, I>(files: I, kinds: &KindTable) -> Result<RepoIndex>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let scans = files
        .into_iter()
        .map(|(path, text)| index_text(path, text.to_string(), kinds))
        .collect();
    build_index(scans, Vec::new())
}
