//! Structured prompts and the token budget that bounds them.
//!
//! Token counts are estimated as `ceil(chars / 4)` over the prompt's text
//! fields. The structural `facts` block is small and always kept, so it is
//! not counted.

use serde::{Deserialize, Serialize};

use crate::conventions::ConventionFinding;
use crate::error::{Error, Result};
use crate::index::{ArtifactId, EvidenceAnchor, LineRange, RepoIndex};
use crate::influence::InfluenceCandidate;
use crate::ingest::{ChangeHunk, FileModification, IntroducedSymbol, LineKind, ModificationKind};

use super::shape::detect_change_shape;

pub const DEFAULT_BUDGET: usize = 16_000;

const CARD_INSTRUCTIONS: &str = "Summarize one file modification made by an AI coding agent. \
Return a short title, a significance grade (low, medium or high) and a summary of one to three \
sentences naming the definitions the change touches.";

const RATIONALE_INSTRUCTIONS: &str = "Explain why an AI coding agent changed this file the way it \
did. Return reasoning paragraphs in hunk order, citing evidence anchors from the prompt where they \
support a claim, and alternative implementations with their trade-offs.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    CardContent,
    Rationale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptHunk {
    pub header: String,
    pub post_range: Option<LineRange>,
    /// Body lines with their ` `, `+` or `-` prefix.
    pub lines: Vec<String>,
}

/// Evidence text of one influence, carried with the candidate's score so
/// truncation can drop the weakest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSlice {
    pub path: String,
    pub score: f64,
    pub anchor: EvidenceAnchor,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkFacts {
    pub pre_range: Option<LineRange>,
    pub post_range: Option<LineRange>,
    pub added: usize,
    pub removed: usize,
    /// Symbols whose definition line this hunk adds.
    pub introduced: Vec<String>,
    /// Post-state symbols whose span overlaps the hunk's changed lines.
    pub enclosing: Vec<String>,
}

/// Structural facts a deterministic backend can phrase without reading
/// code. Computed from the full change, before any truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeFacts {
    pub order_index: usize,
    /// The modified file's artifact when it exists in the snapshot.
    pub artifact_id: Option<ArtifactId>,
    pub line_count: u32,
    pub added_lines: usize,
    pub removed_lines: usize,
    pub touched_symbols: Vec<String>,
    pub introduced_symbols: Vec<IntroducedSymbol>,
    pub hunks: Vec<HunkFacts>,
    pub change_shape: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMetadata {
    pub budget: usize,
    pub estimated_tokens: usize,
    pub truncated: bool,
    /// `path:start..end` of each influence slice dropped, weakest first.
    pub dropped_slices: Vec<String>,
    pub trimmed_context_lines: usize,
    /// Changed lines left out of a card prompt that could not fit.
    pub elided_changed_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub task: PromptTask,
    pub instructions: String,
    pub task_prompt: String,
    pub path: String,
    pub kind: ModificationKind,
    pub hunks: Vec<PromptHunk>,
    pub influences: Vec<PromptSlice>,
    pub conventions: Vec<ConventionFinding>,
    pub facts: ChangeFacts,
    pub metadata: PromptMetadata,
    /// Validation errors from the previous attempt, when repairing.
    pub repair_feedback: Vec<String>,
}

fn tokens_for(chars: usize) -> usize {
    chars.div_ceil(4)
}

fn hunk_chars(h: &PromptHunk) -> usize {
    h.header.chars().count() + h.lines.iter().map(|l| l.chars().count() + 1).sum::<usize>()
}

fn mandatory_chars(p: &StructuredPrompt) -> usize {
    p.instructions.chars().count()
        + p.task_prompt.chars().count()
        + p.hunks
            .iter()
            .map(|h| {
                h.header.chars().count()
                    + h.lines
                        .iter()
                        .filter(|l| !l.starts_with(' '))
                        .map(|l| l.chars().count() + 1)
                        .sum::<usize>()
            })
            .sum::<usize>()
        + p.conventions
            .iter()
            .map(|c| c.convention.chars().count() + c.rationale.chars().count())
            .sum::<usize>()
}

/// Estimated token size of the prompt's text.
pub fn estimate_tokens(p: &StructuredPrompt) -> usize {
    let chars = p.instructions.chars().count()
        + p.task_prompt.chars().count()
        + p.hunks.iter().map(hunk_chars).sum::<usize>()
        + p.influences
            .iter()
            .map(|s| s.path.chars().count() + s.text.chars().count())
            .sum::<usize>()
        + p.conventions
            .iter()
            .map(|c| c.convention.chars().count() + c.rationale.chars().count())
            .sum::<usize>();
    tokens_for(chars)
}

fn prompt_hunk(h: &ChangeHunk) -> PromptHunk {
    PromptHunk {
        header: format!(
            "@@ -{},{} +{},{} @@",
            h.pre_start, h.pre_len, h.post_start, h.post_len
        ),
        post_range: h.post_range(),
        lines: h
            .lines
            .iter()
            .map(|l| {
                let prefix = match l.kind {
                    LineKind::Context => ' ',
                    LineKind::Added => '+',
                    LineKind::Removed => '-',
                };
                format!("{}{}", prefix, l.text)
            })
            .collect(),
    }
}

fn changed_span(h: &ChangeHunk) -> Option<LineRange> {
    let added = h.added_with_lines();
    match (added.first(), added.last()) {
        (Some((a, _)), Some((b, _))) => LineRange::new(*a, *b),
        // a pure removal sits between two post-image lines
        _ => h.post_range().map(|r| {
            let at = (h.post_start
                + (h.lines
                    .iter()
                    .take_while(|l| l.kind == LineKind::Context)
                    .count() as u32))
                .clamp(r.start, r.end);
            LineRange::single(at)
        }),
    }
}

pub fn change_facts(modification: &FileModification, index: &RepoIndex) -> ChangeFacts {
    let artifact = match modification.kind {
        ModificationKind::Deleted => None,
        _ => index.artifact_by_path(&modification.path),
    };
    let post_symbols: Vec<_> = artifact
        .map(|a| index.symbols_of(&a.artifact_id).collect())
        .unwrap_or_default();
    let hunks = modification
        .hunks
        .iter()
        .map(|h| {
            let added = h.added_with_lines();
            let introduced = modification
                .introduced_symbols
                .iter()
                .filter(|s| added.iter().any(|(l, _)| *l == s.line))
                .map(|s| s.name.clone())
                .collect();
            let mut enclosing: Vec<String> = Vec::new();
            if let Some(span) = changed_span(h) {
                for s in &post_symbols {
                    if s.span.overlaps(&span) && !enclosing.contains(&s.name) {
                        enclosing.push(s.name.clone());
                    }
                }
            }
            HunkFacts {
                pre_range: h.pre_range(),
                post_range: h.post_range(),
                added: added.len(),
                removed: h.removed_lines().count(),
                introduced,
                enclosing,
            }
        })
        .collect();
    ChangeFacts {
        order_index: modification.order_index,
        artifact_id: artifact.map(|a| a.artifact_id.clone()),
        line_count: artifact.map(|a| a.line_count).unwrap_or(0),
        added_lines: modification.added_line_count(),
        removed_lines: modification.removed_line_count(),
        touched_symbols: modification.post_symbols.clone(),
        introduced_symbols: modification.introduced_symbols.clone(),
        hunks,
        change_shape: detect_change_shape(modification).to_string(),
    }
}

fn base_prompt(
    task: PromptTask,
    task_prompt: &str,
    modification: &FileModification,
    index: &RepoIndex,
    budget: usize,
) -> Result<StructuredPrompt> {
    if budget == 0 {
        return Err(Error::Contract("token budget must be positive".into()));
    }
    Ok(StructuredPrompt {
        task,
        instructions: match task {
            PromptTask::CardContent => CARD_INSTRUCTIONS,
            PromptTask::Rationale => RATIONALE_INSTRUCTIONS,
        }
        .to_string(),
        task_prompt: task_prompt.to_string(),
        path: modification.path.clone(),
        kind: modification.kind,
        hunks: modification.hunks.iter().map(prompt_hunk).collect(),
        influences: Vec::new(),
        conventions: Vec::new(),
        facts: change_facts(modification, index),
        metadata: PromptMetadata {
            budget,
            ..PromptMetadata::default()
        },
        repair_feedback: Vec::new(),
    })
}

/// Removes one outer context line, alternating between the front and the
/// back of each hunk in turn. Returns false when no context is left.
fn trim_one_context_line(p: &mut StructuredPrompt, turn: &mut usize) -> bool {
    let n = p.hunks.len();
    for _ in 0..(2 * n) {
        let hunk = (*turn / 2) % n.max(1);
        let front = turn.is_multiple_of(2);
        *turn += 1;
        let lines = &mut p.hunks[hunk].lines;
        let edge = if front { lines.first() } else { lines.last() };
        if edge.is_some_and(|l| l.starts_with(' ')) {
            if front {
                lines.remove(0);
            } else {
                lines.pop();
            }
            return true;
        }
    }
    false
}

fn trim_context(p: &mut StructuredPrompt) {
    let mut turn = 0;
    while estimate_tokens(p) > p.metadata.budget && trim_one_context_line(p, &mut turn) {
        p.metadata.trimmed_context_lines += 1;
    }
}

fn finish(mut p: StructuredPrompt) -> StructuredPrompt {
    p.metadata.estimated_tokens = estimate_tokens(&p);
    p.metadata.truncated = !p.metadata.dropped_slices.is_empty()
        || p.metadata.trimmed_context_lines > 0
        || p.metadata.elided_changed_lines > 0;
    p
}

/// Context for the Level 2 rationale: task prompt, hunks, evidence slices
/// of the influences and the convention findings, within `budget` tokens.
///
/// Over budget, influence slices are dropped lowest score first, then hunk
/// context lines are trimmed from both ends. The task prompt, changed
/// lines and findings are never cut; when they alone exceed the budget the
/// result is a budget error.
pub fn assemble_context(
    task_prompt: &str,
    modification: &FileModification,
    index: &RepoIndex,
    influences: &[InfluenceCandidate],
    conventions: &[ConventionFinding],
    budget: usize,
) -> Result<StructuredPrompt> {
    let mut p = base_prompt(
        PromptTask::Rationale,
        task_prompt,
        modification,
        index,
        budget,
    )?;
    p.conventions = conventions.to_vec();
    let mandatory = tokens_for(mandatory_chars(&p));
    if mandatory > budget {
        return Err(Error::Budget(format!(
            "the change needs about {} tokens without context or influences; budget is {}",
            mandatory, budget
        )));
    }

    let mut ranked: Vec<&InfluenceCandidate> = influences.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.path.cmp(&b.path))
    });
    for c in ranked {
        for anchor in &c.evidence {
            let text = index.resolve_anchor(anchor)?.to_string();
            p.influences.push(PromptSlice {
                path: c.path.clone(),
                score: c.score,
                anchor: anchor.clone(),
                text,
            });
        }
    }
    while estimate_tokens(&p) > budget {
        let Some(s) = p.influences.pop() else { break };
        p.metadata
            .dropped_slices
            .push(format!("{}:{}", s.path, s.anchor.span));
    }
    trim_context(&mut p);
    Ok(finish(p))
}

/// Context for one Level 1 card. Cards must always be produced, so a change
/// too large for the budget has its trailing changed lines elided instead
/// of failing.
pub fn card_context(
    task_prompt: &str,
    modification: &FileModification,
    index: &RepoIndex,
    budget: usize,
) -> Result<StructuredPrompt> {
    let mut p = base_prompt(
        PromptTask::CardContent,
        task_prompt,
        modification,
        index,
        budget,
    )?;
    trim_context(&mut p);
    'outer: while estimate_tokens(&p) > budget {
        for h in p.hunks.iter_mut().rev() {
            if h.lines.pop().is_some() {
                p.metadata.elided_changed_lines += 1;
                continue 'outer;
            }
        }
        break;
    }
    Ok(finish(p))
}
