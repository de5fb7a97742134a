use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::backend::{GenerationBackend, TemplateBackend};
use super::context::{assemble_context, card_context, DEFAULT_BUDGET};
use super::repair::{generate_validated, DEFAULT_MAX_REPAIRS};
use super::{
    schema, Alternative, GenerationError, Level1Explanation, Level2Explanation, ReasoningParagraph,
    Significance, SummaryCard, DOCUMENT_VERSION,
};
use crate::conventions::{check_adherence, ConventionConfig, ConventionProfile};
use crate::error::{Error, Result};
use crate::index::{EvidenceAnchor, LineRange, RepoIndex};
use crate::influence::{Ranker, Weights, DEFAULT_K};
use crate::ingest::{FileModification, ModificationKind};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub budget: usize,
    pub max_repairs: usize,
    pub k: usize,
    pub weights: Weights,
    pub conventions: ConventionConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            budget: DEFAULT_BUDGET,
            max_repairs: DEFAULT_MAX_REPAIRS,
            k: DEFAULT_K,
            weights: Weights::default(),
            conventions: ConventionConfig::default(),
        }
    }
}

/// Explanation generation for one backend. The ranker's call counter makes
/// the Level 2 laziness contract observable.
pub struct Engine {
    backend: Arc<dyn GenerationBackend>,
    ranker: Ranker,
    config: EngineConfig,
}

#[derive(Deserialize)]
struct CardContent {
    title: String,
    significance: Significance,
    summary: String,
}

#[derive(Deserialize)]
struct Rationale {
    reasoning: Vec<ReasoningParagraph>,
    alternatives: Vec<Alternative>,
}

fn sentence_count(text: &str) -> usize {
    let mut count = 0;
    let mut chars = text.trim().chars().peekable();
    while let Some(c) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            count += 1;
        }
    }
    // trailing text without a terminator is a sentence too
    if !text.trim().is_empty() && !text.trim().ends_with(['.', '!', '?']) {
        count += 1;
    }
    count
}

/// Coalesced post-state ranges of every hunk, in the modified file.
fn card_anchors(m: &FileModification, index: &RepoIndex) -> Vec<EvidenceAnchor> {
    if m.kind == ModificationKind::Deleted {
        return Vec::new();
    }
    let Some(artifact) = index.artifact_by_path(&m.path) else {
        return Vec::new();
    };
    let mut ranges: Vec<LineRange> = m
        .hunks
        .iter()
        .filter_map(|h| h.post_range())
        .filter(|r| r.end <= artifact.line_count)
        .collect();
    ranges.sort();
    let mut merged: Vec<LineRange> = Vec::new();
    for r in ranges {
        match merged.last_mut() {
            Some(last) if last.touches(&r) => *last = last.union(&r),
            _ => merged.push(r),
        }
    }
    merged
        .into_iter()
        .map(|span| EvidenceAnchor {
            artifact_id: artifact.artifact_id.clone(),
            span,
            label: format!("changed lines {}", span),
        })
        .collect()
}

fn unresolved(anchors: &[&EvidenceAnchor], index: &RepoIndex) -> Vec<String> {
    anchors
        .iter()
        .filter_map(|a| {
            index.resolve_anchor(a).err().map(|e| {
                format!(
                    "anchor {}:{} does not resolve: {}",
                    a.artifact_id, a.span, e
                )
            })
        })
        .collect()
}

impl Engine {
    pub fn new(backend: Arc<dyn GenerationBackend>, config: EngineConfig) -> Self {
        let ranker = Ranker::new(config.weights, config.k);
        Engine {
            backend,
            ranker,
            config,
        }
    }

    pub fn template() -> Self {
        Engine::new(Arc::new(TemplateBackend), EngineConfig::default())
    }

    pub fn ranker(&self) -> &Ranker {
        &self.ranker
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    fn card(
        &self,
        task_prompt: &str,
        m: &FileModification,
        index: &RepoIndex,
    ) -> Result<SummaryCard> {
        let prompt = card_context(task_prompt, m, index, self.config.budget)?;
        let check = |v: &Value| {
            let n = v["summary"].as_str().map(sentence_count).unwrap_or(0);
            if (1..=3).contains(&n) {
                vec![]
            } else {
                vec![format!("/summary: has {} sentences, expected 1 to 3", n)]
            }
        };
        let raw = generate_validated(
            self.backend.as_ref(),
            &prompt,
            schema::card_content(),
            self.config.max_repairs,
            Some(&check),
        )?;
        let content: CardContent = serde_json::from_value(raw).map_err(|e| {
            Error::Contract(format!(
                "validated card content does not deserialize: {}",
                e
            ))
        })?;
        Ok(SummaryCard {
            order_index: m.order_index,
            path: m.path.clone(),
            kind: m.kind,
            title: content.title,
            significance: content.significance,
            summary: content.summary,
            anchors: card_anchors(m, index),
        })
    }

    /// Builds one card per modification in timeline order, handing each to
    /// `on_card` as soon as it exists. Never touches the influence ranker.
    pub fn level1(
        &self,
        task_prompt: &str,
        timeline: &[FileModification],
        index: &RepoIndex,
        on_card: &mut dyn FnMut(&SummaryCard),
    ) -> std::result::Result<Level1Explanation, GenerationError> {
        let mut doc = Level1Explanation {
            version: DOCUMENT_VERSION,
            snapshot_id: index.snapshot_id().to_string(),
            cards: Vec::with_capacity(timeline.len()),
        };
        for m in timeline {
            match self.card(task_prompt, m, index) {
                Ok(card) => {
                    on_card(&card);
                    doc.cards.push(card);
                }
                Err(e) => {
                    let (message, transcripts) = match e {
                        Error::Generation(g) => (g.message, g.transcripts),
                        other => (other.to_string(), Vec::new()),
                    };
                    return Err(GenerationError {
                        message: format!("card {} ({}): {}", m.order_index, m.path, message),
                        transcripts,
                        partial: serde_json::to_value(&doc).ok(),
                    });
                }
            }
        }
        let errors =
            schema::level1().errors(&serde_json::to_value(&doc).expect("level 1 serializes"));
        if !errors.is_empty() {
            return Err(GenerationError {
                message: "level 1 document fails its schema".into(),
                transcripts: errors,
                partial: serde_json::to_value(&doc).ok(),
            });
        }
        Ok(doc)
    }

    /// The rationale for one modification.
    pub fn level2(
        &self,
        task_prompt: &str,
        m: &FileModification,
        index: &RepoIndex,
        profile: &ConventionProfile,
    ) -> Result<Level2Explanation> {
        let influences = self.ranker.rank(m, index)?;
        let conventions = check_adherence(m, profile);
        let prompt = assemble_context(
            task_prompt,
            m,
            index,
            &influences,
            &conventions,
            self.config.budget,
        )?;
        let check = |v: &Value| {
            let paragraphs: Vec<ReasoningParagraph> =
                serde_json::from_value(v["reasoning"].clone()).unwrap_or_default();
            let anchors: Vec<&EvidenceAnchor> = paragraphs
                .iter()
                .filter_map(|p| p.anchor.as_ref())
                .collect();
            unresolved(&anchors, index)
        };
        let raw = generate_validated(
            self.backend.as_ref(),
            &prompt,
            schema::rationale(),
            self.config.max_repairs,
            Some(&check),
        )?;
        let rationale: Rationale = serde_json::from_value(raw).map_err(|e| {
            Error::Contract(format!("validated rationale does not deserialize: {}", e))
        })?;
        let doc = Level2Explanation {
            version: DOCUMENT_VERSION,
            snapshot_id: index.snapshot_id().to_string(),
            order_index: m.order_index,
            path: m.path.clone(),
            influences,
            conventions,
            reasoning: rationale.reasoning,
            alternatives: rationale.alternatives,
        };
        let errors =
            schema::level2().errors(&serde_json::to_value(&doc).expect("level 2 serializes"));
        if !errors.is_empty() {
            return Err(Error::Contract(format!(
                "level 2 document fails its schema: {}",
                errors.join("; ")
            )));
        }
        let anchors: Vec<&EvidenceAnchor> = doc.anchors().collect();
        let bad = unresolved(&anchors, index);
        if !bad.is_empty() {
            return Err(Error::Contract(bad.join("; ")));
        }
        Ok(doc)
    }
}

/// Level 1 with default settings and no task prompt.
pub fn generate_level1(
    timeline: &[FileModification],
    index: &RepoIndex,
    backend: Arc<dyn GenerationBackend>,
) -> std::result::Result<Level1Explanation, GenerationError> {
    Engine::new(backend, EngineConfig::default()).level1("", timeline, index, &mut |_| {})
}

/// Level 2 with default settings and no task prompt.
pub fn generate_level2(
    modification: &FileModification,
    index: &RepoIndex,
    profile: &ConventionProfile,
    backend: Arc<dyn GenerationBackend>,
) -> Result<Level2Explanation> {
    Engine::new(backend, EngineConfig::default()).level2("", modification, index, profile)
}
