//! Session ingestion: the agent's event log and diffs become an ordered,
//! per-file modification timeline.

pub mod diff;
mod session;
mod timeline;

pub use diff::{
    apply_hunks, diff_texts, parse_unified_diff, render_unified, revert_hunks, ChangeHunk,
    HunkLine, LineKind,
};
pub use session::{normalize_path, parse_session_log, AgentSession, EventKind, SessionEvent};
pub use timeline::{
    build_timeline, extract_added_identifiers, DirSnapshot, FileModification, IntroducedSymbol,
    ModificationKind, SnapshotSource,
};
