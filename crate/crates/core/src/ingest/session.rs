use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::diff::{parse_unified_diff, ChangeHunk, LineKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FileEdit,
    FileCreate,
    FileDelete,
    ToolNote,
}

impl EventKind {
    pub fn touches_file(self) -> bool {
        !matches!(self, EventKind::ToolNote)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Parsed form of `diff`, filled in by validation.
    #[serde(skip)]
    pub hunks: Vec<ChangeHunk>,
}

/// A completed agent session, validated and ordered by `seq`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSession {
    pub session_id: String,
    #[serde(default)]
    pub task_prompt: String,
    pub repo_root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default)]
    pub events: Vec<SessionEvent>,
}

impl AgentSession {
    /// Distinct file paths in first-touch order.
    pub fn touched_paths(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.events
            .iter()
            .filter_map(|e| e.path.as_deref())
            .filter(|p| seen.insert(*p))
            .collect()
    }
}

/// Parses and validates a session log document.
pub fn parse_session_log(raw: &[u8]) -> Result<AgentSession> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| Error::Parse(format!("session log is not UTF-8: {}", e)))?;
    let mut session: AgentSession =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("session log: {}", e)))?;
    if session.session_id.is_empty() {
        return Err(Error::Validation("session_id is empty".into()));
    }
    session.events.sort_by_key(|e| e.seq);
    for pair in session.events.windows(2) {
        if pair[0].seq == pair[1].seq {
            return Err(Error::Validation(format!("duplicate seq {}", pair[0].seq)));
        }
    }
    for event in &mut session.events {
        validate_event(event)?;
    }
    Ok(session)
}

fn validate_event(event: &mut SessionEvent) -> Result<()> {
    let seq = event.seq;
    if !event.kind.touches_file() {
        if event.path.is_some() || event.diff.is_some() {
            return Err(Error::Validation(format!(
                "event {}: tool_note carries a path or diff",
                seq
            )));
        }
        return Ok(());
    }
    if event.note.is_some() {
        return Err(Error::Validation(format!(
            "event {}: note is only allowed on tool_note",
            seq
        )));
    }
    let path = event
        .path
        .as_deref()
        .ok_or_else(|| Error::Validation(format!("event {}: missing path", seq)))?;
    let path = normalize_path(path)?;
    let diff = event
        .diff
        .as_deref()
        .ok_or_else(|| Error::Validation(format!("event {}: missing diff", seq)))?;
    let hunks = parse_unified_diff(diff).map_err(|e| match e {
        Error::Binary { .. } => Error::Binary { path: path.clone() },
        Error::Parse(msg) => Error::Parse(format!("event {} ({}): {}", seq, path, msg)),
        other => other,
    })?;
    let has = |kind: LineKind| hunks.iter().flat_map(|h| &h.lines).any(|l| l.kind == kind);
    match event.kind {
        EventKind::FileCreate if has(LineKind::Context) || has(LineKind::Removed) => {
            return Err(Error::Validation(format!(
                "event {}: file_create diff has a non-empty pre-image",
                seq
            )));
        }
        EventKind::FileDelete if has(LineKind::Context) || has(LineKind::Added) => {
            return Err(Error::Validation(format!(
                "event {}: file_delete diff has a non-empty post-image",
                seq
            )));
        }
        _ => {}
    }
    event.path = Some(path);
    event.hunks = hunks;
    Ok(())
}

/// Normalizes a repository-relative path, rejecting absolute paths and any
/// `..` component.
pub fn normalize_path(path: &str) -> Result<String> {
    let escape = || Error::Security {
        path: path.to_string(),
    };
    if path.starts_with('/') || path.starts_with('\\') || path.contains('\0') {
        return Err(escape());
    }
    let bytes = path.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return Err(escape());
    }
    let mut parts = Vec::new();
    for part in path.split(['/', '\\']) {
        match part {
            "" | "." => continue,
            ".." => return Err(escape()),
            p => parts.push(p),
        }
    }
    if parts.is_empty() {
        return Err(Error::Validation(format!("empty path {:?}", path)));
    }
    Ok(parts.join("/"))
}
