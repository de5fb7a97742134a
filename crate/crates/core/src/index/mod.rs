//! Repository snapshot: artifacts, symbols, identifier postings and
//! import/include edges.
//!
//! A [`RepoIndex`] is immutable once built. Its serialized form (see
//! [`IndexDocument`]) carries no file contents; contents travel separately
//! and are re-attached with [`RepoIndex::from_document`].

mod refs;
mod scan;
pub mod symbols;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokens::TokenBag;

pub use refs::extract_reference_edges;
pub use scan::{index_from_files, scan_repository, KindTable, ScanOptions, IGNORE_FILE};
pub use symbols::extract_symbols;

/// Version of the serialized index document.
pub const INDEX_VERSION: u32 = 1;

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRange")]
pub struct LineRange {
    pub start: u32,
    pub end: u32,
}

#[derive(Deserialize)]
struct RawRange {
    start: u32,
    end: u32,
}

impl TryFrom<RawRange> for LineRange {
    type Error = String;

    fn try_from(raw: RawRange) -> std::result::Result<Self, Self::Error> {
        LineRange::new(raw.start, raw.end)
            .ok_or_else(|| format!("invalid line range {}..{}", raw.start, raw.end))
    }
}

impl LineRange {
    pub fn new(start: u32, end: u32) -> Option<Self> {
        (start >= 1 && start <= end).then_some(LineRange { start, end })
    }

    pub fn single(line: u32) -> Self {
        let line = line.max(1);
        LineRange {
            start: line,
            end: line,
        }
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn overlaps(&self, other: &LineRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// True when the ranges overlap or abut.
    pub fn touches(&self, other: &LineRange) -> bool {
        self.start <= other.end.saturating_add(1) && other.start <= self.end.saturating_add(1)
    }

    pub fn union(&self, other: &LineRange) -> LineRange {
        LineRange {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

impl std::fmt::Display for LineRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Stable identifier of an artifact path within a snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactId(pub String);

impl ArtifactId {
    pub fn for_path(path: &str) -> Self {
        let digest = Sha256::digest(path.as_bytes());
        ArtifactId(hex(&digest[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes
        .iter()
        .fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
            let _ = write!(s, "{:02x}", b);
            s
        })
}

pub fn content_digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Digest over `(path, content_digest)` pairs sorted by path.
pub fn snapshot_digest<'a, I>(pairs: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort();
    let mut hasher = Sha256::new();
    for (path, digest) in pairs {
        hasher.update(path.as_bytes());
        hasher.update([0u8]);
        hasher.update(digest.as_bytes());
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Source,
    Documentation,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub artifact_id: ArtifactId,
    pub path: String,
    pub kind: ArtifactKind,
    pub line_count: u32,
    pub content_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Function,
    Type,
    Constant,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub name: String,
    pub symbol_kind: SymbolKind,
    pub artifact_id: ArtifactId,
    pub span: LineRange,
    pub signature_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Posting {
    pub artifact_id: ArtifactId,
    pub span: LineRange,
}

/// Directed import/include edge. `line` is the statement's line in `from`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReferenceEdge {
    pub from: ArtifactId,
    pub to: ArtifactId,
    pub line: u32,
}

/// A resolvable reference to lines of an artifact in one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceAnchor {
    pub artifact_id: ArtifactId,
    pub span: LineRange,
    pub label: String,
}

/// Per-artifact result of [`RepoIndex::query_postings`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HitStats {
    /// Query tokens with at least one posting in the artifact.
    pub distinct_tokens: usize,
    /// Matching `(token, line)` postings.
    pub total_hits: usize,
    pub spans: Vec<LineRange>,
}

/// The serialized index document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDocument {
    pub version: u32,
    pub snapshot_id: String,
    pub artifacts: Vec<ArtifactRecord>,
    pub symbols: Vec<SymbolRecord>,
    pub postings: BTreeMap<String, BTreeSet<Posting>>,
    pub reference_edges: BTreeSet<ReferenceEdge>,
}

#[derive(Debug, Clone)]
pub struct RepoIndex {
    doc: IndexDocument,
    contents: BTreeMap<ArtifactId, Arc<str>>,
    by_id: BTreeMap<ArtifactId, usize>,
    by_path: BTreeMap<String, usize>,
    artifact_tokens: BTreeMap<ArtifactId, BTreeSet<String>>,
    warnings: Vec<String>,
}

impl RepoIndex {
    /// Attaches file contents to a deserialized document, checking that each
    /// artifact's digest matches.
    pub fn from_document(
        doc: IndexDocument,
        contents: BTreeMap<ArtifactId, Arc<str>>,
    ) -> Result<Self> {
        if doc.version != INDEX_VERSION {
            return Err(Error::Validation(format!(
                "unsupported index version {}",
                doc.version
            )));
        }
        for a in &doc.artifacts {
            let text = contents.get(&a.artifact_id).ok_or_else(|| {
                Error::NotFound(format!(
                    "contents for artifact {} ({})",
                    a.artifact_id, a.path
                ))
            })?;
            if content_digest(text.as_bytes()) != a.content_digest {
                return Err(Error::Validation(format!(
                    "contents of {} do not match its digest",
                    a.path
                )));
            }
        }
        Self::assemble(doc, contents, Vec::new())
    }

    pub(crate) fn assemble(
        doc: IndexDocument,
        contents: BTreeMap<ArtifactId, Arc<str>>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        let mut by_path = BTreeMap::new();
        for (i, a) in doc.artifacts.iter().enumerate() {
            if by_id.insert(a.artifact_id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "artifact id collision on {}",
                    a.artifact_id
                )));
            }
            by_path.insert(a.path.clone(), i);
        }
        let mut artifact_tokens: BTreeMap<ArtifactId, BTreeSet<String>> = BTreeMap::new();
        for (token, postings) in &doc.postings {
            for p in postings {
                if !by_id.contains_key(&p.artifact_id) {
                    return Err(Error::Validation(format!(
                        "posting for unknown artifact {}",
                        p.artifact_id
                    )));
                }
                artifact_tokens
                    .entry(p.artifact_id.clone())
                    .or_default()
                    .insert(token.clone());
            }
        }
        for e in &doc.reference_edges {
            if !by_id.contains_key(&e.from) || !by_id.contains_key(&e.to) {
                return Err(Error::Validation(
                    "reference edge to unknown artifact".into(),
                ));
            }
        }
        Ok(RepoIndex {
            doc,
            contents,
            by_id,
            by_path,
            artifact_tokens,
            warnings,
        })
    }

    pub fn document(&self) -> &IndexDocument {
        &self.doc
    }

    pub fn into_parts(self) -> (IndexDocument, BTreeMap<ArtifactId, Arc<str>>) {
        (self.doc, self.contents)
    }

    pub fn contents_map(&self) -> &BTreeMap<ArtifactId, Arc<str>> {
        &self.contents
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.doc).expect("index document serializes")
    }

    pub fn snapshot_id(&self) -> &str {
        &self.doc.snapshot_id
    }

    pub fn artifacts(&self) -> &[ArtifactRecord] {
        &self.doc.artifacts
    }

    pub fn symbols(&self) -> &[SymbolRecord] {
        &self.doc.symbols
    }

    pub fn postings(&self) -> &BTreeMap<String, BTreeSet<Posting>> {
        &self.doc.postings
    }

    pub fn reference_edges(&self) -> &BTreeSet<ReferenceEdge> {
        &self.doc.reference_edges
    }

    /// Files that were skipped or degraded while scanning.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.doc.artifacts.is_empty()
    }

    pub fn artifact(&self, id: &ArtifactId) -> Option<&ArtifactRecord> {
        self.by_id.get(id).map(|&i| &self.doc.artifacts[i])
    }

    pub fn artifact_by_path(&self, path: &str) -> Option<&ArtifactRecord> {
        self.by_path.get(path).map(|&i| &self.doc.artifacts[i])
    }

    pub fn contents(&self, id: &ArtifactId) -> Option<&str> {
        self.contents.get(id).map(|c| &**c)
    }

    pub fn symbols_of<'a>(&'a self, id: &'a ArtifactId) -> impl Iterator<Item = &'a SymbolRecord> {
        self.doc
            .symbols
            .iter()
            .filter(move |s| &s.artifact_id == id)
    }

    /// Distinct canonical tokens occurring in an artifact.
    pub fn tokens_of(&self, id: &ArtifactId) -> Option<&BTreeSet<String>> {
        self.artifact_tokens.get(id)
    }

    /// True when an import edge joins the two artifacts in either direction.
    pub fn linked(&self, a: &ArtifactId, b: &ArtifactId) -> bool {
        self.edges_between(a, b).next().is_some()
    }

    pub fn edges_between<'a>(
        &'a self,
        a: &'a ArtifactId,
        b: &'a ArtifactId,
    ) -> impl Iterator<Item = &'a ReferenceEdge> {
        self.doc
            .reference_edges
            .iter()
            .filter(move |e| (&e.from == a && &e.to == b) || (&e.from == b && &e.to == a))
    }

    /// Exact lines `[start, end]` an anchor names.
    pub fn resolve_anchor(&self, anchor: &EvidenceAnchor) -> Result<&str> {
        self.slice(&anchor.artifact_id, anchor.span)
    }

    pub fn slice(&self, id: &ArtifactId, span: LineRange) -> Result<&str> {
        let record = self.artifact(id).ok_or_else(|| {
            Error::NotFound(format!(
                "artifact {} in snapshot {}",
                id,
                self.snapshot_id()
            ))
        })?;
        if span.end > record.line_count {
            return Err(Error::Range(format!(
                "{} exceeds {} lines of {}",
                span, record.line_count, record.path
            )));
        }
        let text = self
            .contents(id)
            .ok_or_else(|| Error::NotFound(format!("contents of artifact {}", id)))?;
        crate::lines::slice(text, span)
    }

    /// Inverted-index lookup of a token multiset.
    pub fn query_postings(&self, tokens: &TokenBag) -> BTreeMap<ArtifactId, HitStats> {
        let mut out: BTreeMap<ArtifactId, HitStats> = BTreeMap::new();
        for token in tokens.keys() {
            let Some(postings) = self.doc.postings.get(token) else {
                continue;
            };
            let mut seen_in: BTreeSet<&ArtifactId> = BTreeSet::new();
            for p in postings {
                let stats = out.entry(p.artifact_id.clone()).or_default();
                stats.total_hits += 1;
                stats.spans.push(p.span);
                if seen_in.insert(&p.artifact_id) {
                    stats.distinct_tokens += 1;
                }
            }
        }
        for stats in out.values_mut() {
            stats.spans.sort();
            stats.spans.dedup();
        }
        out
    }
}
