//! Ranking of existing repository artifacts that plausibly guided a change.
//!
//! Each candidate gets a fixed linear score over four signals:
//!
//! * `identifier_overlap`: Jaccard similarity between the change's added
//!   canonical tokens and the artifact's token set.
//! * `reference_link`: 1 when an import edge joins the two files.
//! * `path_proximity`: `1 / (1 + d)` with `d` the number of differing
//!   directory components. Proximity alone is not evidence of influence, so
//!   it only counts when one of the other signals is non-zero.
//! * `doc_mention`: 1 for a documentation artifact containing at least one
//!   of the change's tokens.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{
    ArtifactKind, ArtifactRecord, EvidenceAnchor, LineRange, RepoIndex, SymbolRecord,
};
use crate::ingest::{extract_added_identifiers, FileModification};
use crate::tokens::{raw_identifiers, TokenBag};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_SPANS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub identifier_overlap: f64,
    pub reference_link: f64,
    pub path_proximity: f64,
    pub doc_mention: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            identifier_overlap: 0.5,
            reference_link: 0.3,
            path_proximity: 0.1,
            doc_mention: 0.1,
        }
    }
}

impl Weights {
    pub fn combine(&self, parts: &ScoreParts) -> f64 {
        self.identifier_overlap * parts.identifier_overlap
            + self.reference_link * f64::from(parts.reference_link)
            + self.path_proximity * parts.path_proximity
            + self.doc_mention * f64::from(parts.doc_mention)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreParts {
    pub identifier_overlap: f64,
    pub reference_link: u8,
    pub path_proximity: f64,
    pub doc_mention: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceCandidate {
    pub artifact_id: crate::index::ArtifactId,
    pub path: String,
    pub matched_symbols: Vec<SymbolRecord>,
    pub score: f64,
    pub score_parts: ScoreParts,
    pub evidence: Vec<EvidenceAnchor>,
}

/// What a change contributes to scoring, computed once per modification.
#[derive(Debug, Clone)]
pub struct ChangeFeatures {
    pub path: String,
    pub tokens: TokenBag,
    /// Raw (case-preserved) identifiers on added lines, with counts.
    pub names: BTreeMap<String, usize>,
}

impl ChangeFeatures {
    pub fn of(modification: &FileModification) -> Self {
        let mut names = BTreeMap::new();
        for line in modification.hunks.iter().flat_map(|h| h.added_lines()) {
            for id in raw_identifiers(line) {
                *names.entry(id.text.to_string()).or_default() += 1;
            }
        }
        ChangeFeatures {
            path: modification.path.clone(),
            tokens: extract_added_identifiers(modification),
            names,
        }
    }
}

fn directories(path: &str) -> Vec<&str> {
    let mut parts: Vec<&str> = path.split('/').collect();
    parts.pop();
    parts
}

/// Number of directory components not shared by the two paths' common
/// prefix, counted on both sides.
pub fn directory_distance(a: &str, b: &str) -> usize {
    let (da, db) = (directories(a), directories(b));
    let common = da.iter().zip(&db).take_while(|(x, y)| x == y).count();
    (da.len() - common) + (db.len() - common)
}

pub fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn score_parts(
    change: &ChangeFeatures,
    artifact: &ArtifactRecord,
    index: &RepoIndex,
) -> ScoreParts {
    let change_set: BTreeSet<&str> = change.tokens.keys().map(String::as_str).collect();
    let artifact_set: BTreeSet<&str> = index
        .tokens_of(&artifact.artifact_id)
        .map(|s| s.iter().map(String::as_str).collect())
        .unwrap_or_default();
    let identifier_overlap = jaccard(&change_set, &artifact_set);
    let reference_link = index
        .artifact_by_path(&change.path)
        .is_some_and(|m| index.linked(&m.artifact_id, &artifact.artifact_id));
    let doc_mention = artifact.kind == ArtifactKind::Documentation
        && change_set.iter().any(|t| artifact_set.contains(t));
    let other_signal = identifier_overlap > 0.0 || reference_link || doc_mention;
    let path_proximity = if other_signal {
        1.0 / (1.0 + directory_distance(&change.path, &artifact.path) as f64)
    } else {
        0.0
    };
    ScoreParts {
        identifier_overlap,
        reference_link: reference_link as u8,
        path_proximity,
        doc_mention: doc_mention as u8,
    }
}

/// Scores one artifact against a change with the default weights. Evidence
/// is collected when the score is positive.
pub fn score_candidate(
    modification: &FileModification,
    artifact: &ArtifactRecord,
    index: &RepoIndex,
) -> Result<InfluenceCandidate> {
    if artifact.path == modification.path {
        return Err(Error::Contract(format!(
            "{} cannot be scored as an influence on itself",
            artifact.path
        )));
    }
    let change = ChangeFeatures::of(modification);
    Ok(score_with(
        &change,
        artifact,
        index,
        &Weights::default(),
        DEFAULT_MAX_SPANS,
    ))
}

fn score_with(
    change: &ChangeFeatures,
    artifact: &ArtifactRecord,
    index: &RepoIndex,
    weights: &Weights,
    max_spans: usize,
) -> InfluenceCandidate {
    let parts = score_parts(change, artifact, index);
    let mut matched_symbols: Vec<SymbolRecord> = index
        .symbols_of(&artifact.artifact_id)
        .filter(|s| change.names.contains_key(&s.name))
        .cloned()
        .collect();
    matched_symbols.sort_by(|a, b| (a.span, &a.name).cmp(&(b.span, &b.name)));
    let mut candidate = InfluenceCandidate {
        artifact_id: artifact.artifact_id.clone(),
        path: artifact.path.clone(),
        matched_symbols,
        score: weights.combine(&parts),
        score_parts: parts,
        evidence: Vec::new(),
    };
    if candidate.score > 0.0 {
        candidate.evidence = evidence_for(&candidate, change, index, max_spans);
    }
    candidate
}

/// Up to `max_spans` anchors for a positively scored candidate, sorted by
/// start line and pairwise non-overlapping.
///
/// Definition spans of matched symbols come first, most used first. Lines
/// with postings of the change's tokens fill the remaining slots, weighted
/// by how often each token occurs in the change. A candidate that only
/// shares an import edge is anchored at the import statement.
pub fn collect_evidence(
    candidate: &InfluenceCandidate,
    modification: &FileModification,
    index: &RepoIndex,
    max_spans: usize,
) -> Result<Vec<EvidenceAnchor>> {
    if candidate.score <= 0.0 {
        return Err(Error::Contract(format!(
            "evidence requested for zero-score candidate {}",
            candidate.path
        )));
    }
    let change = ChangeFeatures::of(modification);
    Ok(evidence_for(candidate, &change, index, max_spans))
}

fn evidence_for(
    candidate: &InfluenceCandidate,
    change: &ChangeFeatures,
    index: &RepoIndex,
    max_spans: usize,
) -> Vec<EvidenceAnchor> {
    let id = &candidate.artifact_id;
    let mut picked: Vec<EvidenceAnchor> = Vec::new();
    let offer = |span: LineRange, label: String, picked: &mut Vec<EvidenceAnchor>| {
        if picked.len() < max_spans && !picked.iter().any(|a| a.span.overlaps(&span)) {
            picked.push(EvidenceAnchor {
                artifact_id: id.clone(),
                span,
                label,
            });
        }
    };

    let mut symbols: Vec<&SymbolRecord> = candidate.matched_symbols.iter().collect();
    symbols.sort_by_key(|s| (std::cmp::Reverse(change.names[&s.name]), s.span));
    for s in symbols {
        offer(s.span, format!("definition of {}", s.name), &mut picked);
    }

    // line -> (weight, tokens present)
    let mut lines: BTreeMap<u32, (usize, Vec<&str>)> = BTreeMap::new();
    for (token, count) in &change.tokens {
        let Some(postings) = index.postings().get(token) else {
            continue;
        };
        for p in postings.iter().filter(|p| &p.artifact_id == id) {
            let entry = lines.entry(p.span.start).or_default();
            entry.0 += count;
            entry.1.push(token);
        }
    }
    let mut ranked: Vec<(u32, usize, Vec<&str>)> =
        lines.into_iter().map(|(l, (w, t))| (l, w, t)).collect();
    ranked.sort_by_key(|(line, weight, _)| (std::cmp::Reverse(*weight), *line));
    for (line, _, tokens) in ranked {
        offer(
            LineRange::single(line),
            format!("uses {}", tokens.join(", ")),
            &mut picked,
        );
    }

    if picked.is_empty() {
        if let Some(m) = index.artifact_by_path(&change.path) {
            // prefer the statement inside the candidate itself
            let mut edges: Vec<_> = index.edges_between(&m.artifact_id, id).collect();
            edges.sort_by_key(|e| (&e.from != id, e.line));
            if let Some(e) = edges.first() {
                let (anchor_id, label) = if &e.from == id {
                    (id.clone(), format!("imports {}", change.path))
                } else {
                    (
                        m.artifact_id.clone(),
                        format!("{} imports {}", change.path, candidate.path),
                    )
                };
                picked.push(EvidenceAnchor {
                    artifact_id: anchor_id,
                    span: LineRange::single(e.line),
                    label,
                });
            }
        }
    }
    picked.sort_by_key(|a| (a.span, a.artifact_id.clone()));
    picked
}

/// Ranked influences with an instrumented call counter, so callers can
/// observe that ranking work happened only when requested.
#[derive(Debug)]
pub struct Ranker {
    pub weights: Weights,
    pub k: usize,
    pub max_spans: usize,
    calls: AtomicUsize,
}

impl Default for Ranker {
    fn default() -> Self {
        Ranker::new(Weights::default(), DEFAULT_K)
    }
}

impl Ranker {
    pub fn new(weights: Weights, k: usize) -> Self {
        Ranker {
            weights,
            k,
            max_spans: DEFAULT_MAX_SPANS,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `rank` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn rank(
        &self,
        modification: &FileModification,
        index: &RepoIndex,
    ) -> Result<Vec<InfluenceCandidate>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.k == 0 {
            return Err(Error::Contract("k must be at least 1".into()));
        }
        let change = ChangeFeatures::of(modification);
        let mut scored: Vec<InfluenceCandidate> = index
            .artifacts()
            .par_iter()
            .filter(|a| a.path != modification.path)
            .map(|a| score_with(&change, a, index, &self.weights, self.max_spans))
            .filter(|c| c.score > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.path.cmp(&b.path))
        });
        scored.truncate(self.k);
        Ok(scored)
    }
}

/// Top `k` influences with the default weights.
pub fn rank_influences(
    modification: &FileModification,
    index: &RepoIndex,
    k: usize,
) -> Result<Vec<InfluenceCandidate>> {
    Ranker::new(Weights::default(), k).rank(modification, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{index_from_files, KindTable};
    use crate::ingest::diff_texts;
    use crate::ingest::ModificationKind;

    fn created(path: &str, text: &str) -> FileModification {
        FileModification {
            path: path.to_string(),
            kind: ModificationKind::Created,
            hunks: diff_texts("", text, 3),
            order_index: 0,
            post_symbols: Vec::new(),
            introduced_symbols: Vec::new(),
        }
    }

    fn index(files: &[(&str, &str)]) -> RepoIndex {
        index_from_files(files.iter().copied(), &KindTable::default()).unwrap()
    }

    #[test]
    fn formula_examples() {
        let w = Weights::default();
        let full = ScoreParts {
            identifier_overlap: 1.0,
            reference_link: 1,
            path_proximity: 1.0,
            doc_mention: 0,
        };
        assert!((w.combine(&full) - 0.9).abs() < 1e-12);
        let half = ScoreParts {
            identifier_overlap: 0.5,
            reference_link: 0,
            path_proximity: 0.5,
            doc_mention: 0,
        };
        assert!((w.combine(&half) - 0.30).abs() < 1e-12);
    }

    #[test]
    fn directory_distance_counts_both_sides() {
        assert_eq!(directory_distance("a/x.py", "a/y.py"), 0);
        assert_eq!(directory_distance("a/x.py", "a/b/y.py"), 1);
        assert_eq!(directory_distance("a/c/x.py", "a/b/y.py"), 2);
        assert_eq!(directory_distance("x.py", "y.py"), 0);
    }

    #[test]
    fn identical_tokens_with_edge_in_same_dir_scores_point_nine() {
        // b.py imports m.py; the change's tokens equal b's tokens exactly
        let idx = index(&[
            ("pkg/m.py", "alpha beta\n"),
            ("pkg/b.py", "import m\nalpha beta\n"),
        ]);
        let m = created("pkg/m.py", "import m\nalpha beta\n");
        let c = score_candidate(&m, idx.artifact_by_path("pkg/b.py").unwrap(), &idx).unwrap();
        assert_eq!(c.score_parts.identifier_overlap, 1.0);
        assert_eq!(c.score_parts.reference_link, 1);
        assert_eq!(c.score_parts.path_proximity, 1.0);
        assert!((c.score - 0.9).abs() < 1e-12);
    }

    #[test]
    fn disjoint_change_ranks_nothing() {
        let idx = index(&[("far/away/b.py", "gamma delta\n")]);
        let m = created("a.py", "alpha = beta\n");
        let c = score_candidate(&m, idx.artifact_by_path("far/away/b.py").unwrap(), &idx).unwrap();
        assert_eq!(c.score, 0.0);
        assert!(c.evidence.is_empty());
        assert!(rank_influences(&m, &idx, 5).unwrap().is_empty());
    }

    #[test]
    fn definer_wins_and_stranger_is_absent() {
        let idx = index(&[
            ("a.py", "x = load_user(user_id)\n"),
            ("b.py", "def load_user(user_id):\n    return user_id\n"),
            ("c.py", "def unrelated():\n    pass\n"),
        ]);
        let m = created("a.py", "x = load_user(user_id)\n");
        let ranked = rank_influences(&m, &idx, 5).unwrap();
        assert_eq!(
            ranked.iter().map(|c| c.path.as_str()).collect::<Vec<_>>(),
            vec!["b.py"]
        );
        let b = &ranked[0];
        assert_eq!(b.matched_symbols.len(), 1);
        assert_eq!(b.evidence[0].span, LineRange::new(1, 2).unwrap());
        assert_eq!(b.evidence[0].label, "definition of load_user");
    }

    #[test]
    fn ties_break_by_path() {
        let idx = index(&[("b/y.py", "shared_name\n"), ("a/x.py", "shared_name\n")]);
        let m = created("m.py", "shared_name\n");
        let ranked = rank_influences(&m, &idx, 5).unwrap();
        assert_eq!(ranked[0].score, ranked[1].score);
        assert_eq!(ranked[0].path, "a/x.py");
    }

    #[test]
    fn scattered_hits_give_three_sorted_disjoint_anchors() {
        let body: String = (0..10)
            .map(|i| {
                format!(
                    "token_{}\nfiller\n",
                    ["aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh", "ii", "jj"][i]
                )
            })
            .collect();
        let idx = index(&[("doc.txt", &body)]);
        let m = created("m.py", "token = aa + bb + cc + dd\n");
        let ranked = rank_influences(&m, &idx, 5).unwrap();
        let ev = &ranked[0].evidence;
        assert_eq!(ev.len(), 3);
        assert!(ev.windows(2).all(|w| w[0].span.end < w[1].span.start));
        for a in ev {
            assert!(idx.resolve_anchor(a).unwrap().contains("token_"));
        }
    }

    #[test]
    fn zero_score_evidence_is_a_contract_error() {
        let idx = index(&[("b.py", "gamma\n")]);
        let m = created("a.py", "alpha\n");
        let c = score_candidate(&m, idx.artifact_by_path("b.py").unwrap(), &idx).unwrap();
        assert!(matches!(
            collect_evidence(&c, &m, &idx, 3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn documentation_mentions_reach_full_score() {
        let idx = index(&[("README.md", "alpha\n")]);
        let m = created("README2.md", "alpha\n");
        let ranked = rank_influences(&m, &idx, 5).unwrap();
        assert_eq!(ranked[0].score_parts.doc_mention, 1);
        // no import edge can reach a document: 0.5 + 0.1 + 0.1
        assert!((ranked[0].score - 0.7).abs() < 1e-12);
    }

    #[test]
    fn reference_only_candidate_anchors_the_import() {
        let idx = index(&[
            ("app.py", "import helpers\nrun()\n"),
            ("helpers.py", "def other():\n    pass\n"),
        ]);
        let m = created("app.py", "run()\n");
        let ranked = rank_influences(&m, &idx, 5).unwrap();
        assert_eq!(ranked.len(), 1);
        let a = &ranked[0].evidence[0];
        assert_eq!(idx.resolve_anchor(a).unwrap(), "import helpers\n");
    }

    #[test]
    fn ranker_counts_calls() {
        let idx = index(&[("b.py", "alpha\n")]);
        let r = Ranker::default();
        assert_eq!(r.calls(), 0);
        r.rank(&created("a.py", "alpha\n"), &idx).unwrap();
        assert_eq!(r.calls(), 1);
    }
}
