//! Two-level explanations.
//!
//! Level 1 is a summary card per file modification, produced eagerly and
//! streamed card by card. Level 2 is the rationale for one modification
//! (influences, conventions, reasoning and alternatives) and is produced
//! only when asked for.
//!
//! Text comes from a [`GenerationBackend`]. Whatever it returns is checked
//! against the bundled JSON schemas and re-prompted through a bounded repair
//! loop; facts such as anchors and influences are computed here, never
//! taken from the backend.

mod backend;
mod context;
mod engine;
mod repair;
pub mod schema;
mod shape;

use serde::{Deserialize, Serialize};

use crate::conventions::ConventionFinding;
use crate::index::EvidenceAnchor;
use crate::influence::InfluenceCandidate;
use crate::ingest::ModificationKind;

pub use backend::{
    template_significance, template_title, BackendConfig, BackendError, BackendKind,
    GenerationBackend, RemoteBackend, ScriptedBackend, TemplateBackend, HIGH_SIGNIFICANCE_LINES,
    LOW_SIGNIFICANCE_LINES,
};
pub use context::{
    assemble_context, card_context, change_facts, estimate_tokens, ChangeFacts, HunkFacts,
    PromptHunk, PromptMetadata, PromptSlice, PromptTask, StructuredPrompt, DEFAULT_BUDGET,
};
pub use engine::{generate_level1, generate_level2, Engine, EngineConfig};
pub use repair::{generate_validated, validate_and_repair, SemanticCheck, DEFAULT_MAX_REPAIRS};
pub use shape::{alternative_for, detect_change_shape};

/// Version of the Level 1 and Level 2 documents.
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryCard {
    pub order_index: usize,
    pub path: String,
    pub kind: ModificationKind,
    pub title: String,
    pub significance: Significance,
    pub summary: String,
    /// Post-state lines of the modified file covering every hunk. Empty
    /// for a deleted file, which has no post-state.
    pub anchors: Vec<EvidenceAnchor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level1Explanation {
    pub version: u32,
    pub snapshot_id: String,
    pub cards: Vec<SummaryCard>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningParagraph {
    pub text: String,
    pub anchor: Option<EvidenceAnchor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tradeoff {
    pub aspect: String,
    pub comparison: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alternative {
    pub title: String,
    pub description: String,
    pub tradeoffs: Vec<Tradeoff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level2Explanation {
    pub version: u32,
    pub snapshot_id: String,
    pub order_index: usize,
    pub path: String,
    pub influences: Vec<InfluenceCandidate>,
    pub conventions: Vec<ConventionFinding>,
    pub reasoning: Vec<ReasoningParagraph>,
    pub alternatives: Vec<Alternative>,
}

impl Level1Explanation {
    /// Every anchor in the document.
    pub fn anchors(&self) -> impl Iterator<Item = &EvidenceAnchor> {
        self.cards.iter().flat_map(|c| c.anchors.iter())
    }
}

impl Level2Explanation {
    /// Every anchor in the document.
    pub fn anchors(&self) -> impl Iterator<Item = &EvidenceAnchor> {
        self.influences
            .iter()
            .flat_map(|i| i.evidence.iter())
            .chain(
                self.conventions
                    .iter()
                    .filter_map(|c| c.example_span.as_ref()),
            )
            .chain(self.reasoning.iter().filter_map(|r| r.anchor.as_ref()))
    }
}

/// Backend failure that survived the repair loop.
#[derive(Debug, thiserror::Error)]
#[error("generation failed: {message}")]
pub struct GenerationError {
    pub message: String,
    /// Validation errors from each attempt, oldest first.
    pub transcripts: Vec<String>,
    /// Whatever was produced before the failure.
    pub partial: Option<serde_json::Value>,
}
