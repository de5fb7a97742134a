//! Explanation engine for completed AI coding-agent sessions.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] parses the agent's session log and unified diffs into an
//!    ordered timeline of per-file [`ingest::FileModification`]s.
//! 2. [`index`] snapshots the repository: artifacts, symbols, identifier
//!    postings and import edges.
//! 3. [`influence`] and [`conventions`] analyze a single modification against
//!    that snapshot.
//! 4. [`explain`] assembles Level 1 summary cards (eagerly) and Level 2
//!    rationale documents (on request) through a pluggable
//!    [`explain::GenerationBackend`].
//!
//! Every claim shown to a user carries an [`EvidenceAnchor`] that resolves to
//! an exact line range of an indexed artifact.

pub mod conventions;
pub mod error;
pub mod explain;
pub mod index;
pub mod influence;
pub mod ingest;
pub mod lines;
pub mod tokens;

pub use error::{Error, Result};
pub use index::{ArtifactId, EvidenceAnchor, LineRange, RepoIndex};
