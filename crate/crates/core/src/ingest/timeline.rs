use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::diff::{diff_texts, revert_hunks, ChangeHunk};
use super::session::{AgentSession, EventKind, SessionEvent};
use crate::error::{Error, Result};
use crate::index::symbols::{extract_symbols_from, ExtractedSymbol};
use crate::index::{LineRange, SymbolKind};
use crate::tokens::{bag, canonical_tokens, extension, TokenBag};

/// Context lines kept around each merged hunk.
pub const MERGED_CONTEXT_LINES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    Created,
    Modified,
    Deleted,
}

/// A symbol whose definition line was added by the change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntroducedSymbol {
    pub name: String,
    pub symbol_kind: SymbolKind,
    /// 1-based post-image line of the definition.
    pub line: u32,
}

/// Net change to one file over the whole session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileModification {
    pub path: String,
    pub kind: ModificationKind,
    pub hunks: Vec<ChangeHunk>,
    pub order_index: usize,
    pub post_symbols: Vec<String>,
    #[serde(default)]
    pub introduced_symbols: Vec<IntroducedSymbol>,
}

impl FileModification {
    pub fn added_line_count(&self) -> usize {
        self.hunks.iter().map(|h| h.added_lines().count()).sum()
    }

    pub fn removed_line_count(&self) -> usize {
        self.hunks.iter().map(|h| h.removed_lines().count()).sum()
    }

    pub fn changed_line_count(&self) -> usize {
        self.hunks.iter().map(ChangeHunk::changed_line_count).sum()
    }
}

/// Read access to the post-session state of the repository.
pub trait SnapshotSource {
    /// Contents of `path`, or `None` when the file does not exist.
    fn read(&self, path: &str) -> Result<Option<String>>;
}

impl SnapshotSource for BTreeMap<String, String> {
    fn read(&self, path: &str) -> Result<Option<String>> {
        Ok(self.get(path).cloned())
    }
}

/// The working tree on disk.
#[derive(Debug, Clone)]
pub struct DirSnapshot {
    root: PathBuf,
}

impl DirSnapshot {
    pub fn new(root: impl AsRef<Path>) -> Self {
        DirSnapshot {
            root: root.as_ref().to_path_buf(),
        }
    }
}

impl SnapshotSource for DirSnapshot {
    fn read(&self, path: &str) -> Result<Option<String>> {
        let full = self.root.join(path);
        match std::fs::read(&full) {
            Ok(bytes) => String::from_utf8(bytes)
                .map(Some)
                .map_err(|_| Error::Binary {
                    path: path.to_string(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(full, e)),
        }
    }
}

/// Builds the per-file modification timeline.
///
/// `snapshot` is the repository *after* the session. Each path's events are
/// replayed backwards from that state to recover the original contents,
/// which checks every logged hunk against the snapshot. The net change is
/// then re-diffed so repeated edits to a file collapse into one
/// modification with non-overlapping hunks.
pub fn build_timeline(
    session: &AgentSession,
    snapshot: &dyn SnapshotSource,
) -> Result<Vec<FileModification>> {
    let paths = session.touched_paths();
    let mut by_path: BTreeMap<&str, Vec<&SessionEvent>> = BTreeMap::new();
    for event in &session.events {
        if let Some(path) = event.path.as_deref() {
            by_path.entry(path).or_default().push(event);
        }
    }

    let mut timeline = Vec::with_capacity(paths.len());
    for (order_index, path) in paths.into_iter().enumerate() {
        let events = &by_path[path];
        let final_state = snapshot.read(path)?;
        let original = replay_backwards(path, events, final_state.clone())?;
        timeline.push(net_modification(
            path,
            order_index,
            original.as_deref(),
            final_state.as_deref(),
        ));
    }
    Ok(timeline)
}

fn replay_backwards(
    path: &str,
    events: &[&SessionEvent],
    final_state: Option<String>,
) -> Result<Option<String>> {
    let mut current = final_state;
    for event in events.iter().rev() {
        let state_error = |reason: &str| Error::Apply {
            path: path.to_string(),
            hunk: 0,
            reason: format!("event seq {}: {}", event.seq, reason),
        };
        let revert = |post: &str| {
            revert_hunks(post, &event.hunks).map_err(|f| Error::Apply {
                path: path.to_string(),
                hunk: f.hunk,
                reason: format!("event seq {}: {}", event.seq, f.reason),
            })
        };
        current = match event.kind {
            EventKind::FileDelete => {
                if current.is_some() {
                    return Err(state_error("file still exists after its deletion"));
                }
                Some(revert("")?)
            }
            EventKind::FileCreate => {
                let post = current.ok_or_else(|| state_error("created file is missing"))?;
                let pre = revert(&post)?;
                if !pre.is_empty() {
                    return Err(state_error("created file had prior contents"));
                }
                None
            }
            EventKind::FileEdit => {
                let post = current.ok_or_else(|| state_error("edited file is missing"))?;
                Some(revert(&post)?)
            }
            EventKind::ToolNote => current,
        };
    }
    Ok(current)
}

fn net_modification(
    path: &str,
    order_index: usize,
    original: Option<&str>,
    final_state: Option<&str>,
) -> FileModification {
    let kind = match (original, final_state) {
        (None, Some(_)) => ModificationKind::Created,
        (Some(_), Some(_)) => ModificationKind::Modified,
        // created and deleted within the session nets out to a deletion of
        // an empty pre-image
        (_, None) => ModificationKind::Deleted,
    };
    let hunks = diff_texts(
        original.unwrap_or(""),
        final_state.unwrap_or(""),
        MERGED_CONTEXT_LINES,
    );

    let (post_symbols, introduced_symbols) = match final_state {
        Some(post) => {
            let symbols = extract_symbols_from(path, post).0;
            let ranges: Vec<LineRange> = hunks.iter().map(post_touch_range).collect();
            let added: BTreeSet<u32> = hunks
                .iter()
                .flat_map(|h| h.added_with_lines())
                .map(|(line, _)| line)
                .collect();
            let introduced = symbols
                .iter()
                .filter(|s| added.contains(&s.span.start))
                .map(|s| IntroducedSymbol {
                    name: s.name.clone(),
                    symbol_kind: s.symbol_kind,
                    line: s.span.start,
                })
                .collect();
            (touched_names(&symbols, &ranges), introduced)
        }
        None => {
            let symbols = original
                .map(|pre| extract_symbols_from(path, pre).0)
                .unwrap_or_default();
            let ranges: Vec<LineRange> = hunks.iter().filter_map(ChangeHunk::pre_range).collect();
            (touched_names(&symbols, &ranges), Vec::new())
        }
    };

    FileModification {
        path: path.to_string(),
        kind,
        hunks,
        order_index,
        post_symbols,
        introduced_symbols,
    }
}

/// Post-image lines a hunk touches; a pure removal touches the line at the
/// removal point.
fn post_touch_range(hunk: &ChangeHunk) -> LineRange {
    hunk.post_range()
        .unwrap_or_else(|| LineRange::single(hunk.post_start.max(1)))
}

fn touched_names(symbols: &[ExtractedSymbol], ranges: &[LineRange]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    symbols
        .iter()
        .filter(|s| ranges.iter().any(|r| r.overlaps(&s.span)))
        .filter(|s| seen.insert(s.name.clone()))
        .map(|s| s.name.clone())
        .collect()
}

/// Canonical identifier tokens of the modification's added lines.
pub fn extract_added_identifiers(modification: &FileModification) -> TokenBag {
    let ext = extension(&modification.path);
    bag(modification
        .hunks
        .iter()
        .flat_map(|h| h.added_lines())
        .flat_map(|line| canonical_tokens(line, &ext)))
}
