//! Repository conventions and the change's adherence to them.
//!
//! The profile counts naming styles over symbol definitions, leading
//! whitespace over source lines and string delimiters over source files in
//! quote-sensitive languages. Structural conventions come from path-pattern
//! rules shipped as data.

use std::collections::BTreeMap;

use globset::{GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{ArtifactId, ArtifactKind, EvidenceAnchor, LineRange, RepoIndex, SymbolKind};
use crate::ingest::FileModification;
use crate::lines::{split_lines, trim_eol};
use crate::tokens::extension;

pub const DEFAULT_DOMINANCE_THRESHOLD: f64 = 0.7;

const DEFAULT_RULES: &str = include_str!("../data/structure_rules.json");

/// Languages whose string delimiters are a style choice.
const QUOTE_LANGUAGES: &[&str] = &[
    "py", "pyi", "js", "jsx", "mjs", "cjs", "ts", "tsx", "rb", "php",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamingStyle {
    Snake,
    Camel,
    Pascal,
    Screaming,
    Ambiguous,
}

impl NamingStyle {
    pub const ALL: [NamingStyle; 5] = [
        NamingStyle::Snake,
        NamingStyle::Camel,
        NamingStyle::Pascal,
        NamingStyle::Screaming,
        NamingStyle::Ambiguous,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NamingStyle::Snake => "snake_case",
            NamingStyle::Camel => "camelCase",
            NamingStyle::Pascal => "PascalCase",
            NamingStyle::Screaming => "SCREAMING_SNAKE_CASE",
            NamingStyle::Ambiguous => "ambiguous",
        }
    }
}

/// Classifies an identifier. Leading and trailing underscores (Python's
/// `_private`, `__dunder__`) are ignored. Identifiers with no case signal,
/// such as `x` or `run`, are ambiguous.
pub fn classify_identifier_style(name: &str) -> NamingStyle {
    let core = name.trim_matches('_');
    let Some(first) = core.chars().next() else {
        return NamingStyle::Ambiguous;
    };
    let has_upper = core.chars().any(char::is_uppercase);
    let has_lower = core.chars().any(char::is_lowercase);
    let has_underscore = core.contains('_');
    if has_underscore {
        if has_lower && !has_upper {
            NamingStyle::Snake
        } else if has_upper && !has_lower {
            NamingStyle::Screaming
        } else {
            NamingStyle::Ambiguous
        }
    } else if first.is_lowercase() && has_upper {
        NamingStyle::Camel
    } else if first.is_uppercase() && has_lower {
        NamingStyle::Pascal
    } else {
        NamingStyle::Ambiguous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndentUnit {
    Spaces,
    Tabs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indentation {
    pub unit: IndentUnit,
    pub width: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuoteStyle {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "double")]
    Double,
    #[serde(rename = "mixed")]
    Mixed,
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// A path-pattern rule for structural conventions. A file is subject to
/// the rule when its name matches the pattern's last component; it follows
/// the rule when its whole path matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureRule {
    pub name: String,
    pub glob_pattern: String,
    pub description: String,
}

pub fn default_structure_rules() -> Vec<StructureRule> {
    serde_json::from_str(DEFAULT_RULES).expect("bundled structure rules parse")
}

pub fn parse_structure_rules(json: &str) -> Result<Vec<StructureRule>> {
    serde_json::from_str(json).map_err(|e| Error::Parse(format!("structure rules: {}", e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionConfig {
    pub dominance_threshold: f64,
    pub rules: Vec<StructureRule>,
}

impl Default for ConventionConfig {
    fn default() -> Self {
        ConventionConfig {
            dominance_threshold: DEFAULT_DOMINANCE_THRESHOLD,
            rules: default_structure_rules(),
        }
    }
}

/// How many repository files a structure rule covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureStat {
    pub rule: StructureRule,
    /// Files whose name matches the rule's last component.
    pub subject: usize,
    /// Subject files whose full path matches.
    pub conforming: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionProfile {
    pub naming_distribution: BTreeMap<NamingStyle, f64>,
    pub naming_counts: BTreeMap<NamingStyle, usize>,
    /// Style counts per symbol kind, so type names can follow a different
    /// convention than functions.
    pub naming_by_kind: BTreeMap<SymbolKind, BTreeMap<NamingStyle, usize>>,
    pub dominant_naming: Option<NamingStyle>,
    pub indentation: Option<Indentation>,
    pub indentation_share: f64,
    pub quote_style: QuoteStyle,
    pub quote_counts: BTreeMap<String, usize>,
    pub structure: Vec<StructureStat>,
    pub sample_anchors: BTreeMap<String, EvidenceAnchor>,
    pub dominance_threshold: f64,
}

/// The style whose frequency reaches `threshold`, if any.
pub fn dominant_style(
    distribution: &BTreeMap<NamingStyle, f64>,
    threshold: f64,
) -> Option<NamingStyle> {
    distribution
        .iter()
        .filter(|(_, f)| **f >= threshold)
        .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(s, _)| *s)
}

fn distribution(counts: &BTreeMap<NamingStyle, usize>) -> BTreeMap<NamingStyle, f64> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return BTreeMap::new();
    }
    counts
        .iter()
        .map(|(s, c)| (*s, *c as f64 / total as f64))
        .collect()
}

/// Leading-whitespace shape of a line: `None` for blank or mixed lines.
fn leading(line: &str) -> Option<(Option<IndentUnit>, u32)> {
    let body = trim_eol(line);
    if body.trim().is_empty() {
        return None;
    }
    let ws: &str = &body[..body.len() - body.trim_start_matches([' ', '\t']).len()];
    if ws.is_empty() {
        return Some((None, 0));
    }
    if ws.chars().all(|c| c == ' ') {
        Some((Some(IndentUnit::Spaces), ws.len() as u32))
    } else if ws.chars().all(|c| c == '\t') {
        Some((Some(IndentUnit::Tabs), ws.len() as u32))
    } else {
        None
    }
}

/// String literal openings on one line, by delimiter.
fn quote_openings(line: &str) -> Vec<(char, String)> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '#' => break,
            '/' if chars.peek() == Some(&'/') => break,
            '`' => {
                for n in chars.by_ref() {
                    if n == '`' {
                        break;
                    }
                }
            }
            '\'' | '"' => {
                let mut body = String::new();
                while let Some(n) = chars.next() {
                    if n == '\\' {
                        chars.next();
                    } else if n == c {
                        break;
                    } else {
                        body.push(n);
                    }
                }
                out.push((c, body));
            }
            _ => {}
        }
    }
    out
}

#[derive(Default)]
struct FileCounts {
    indent_units: BTreeMap<&'static str, usize>,
    widths: BTreeMap<u32, usize>,
    single: usize,
    double: usize,
    first_indent: BTreeMap<&'static str, u32>,
    first_quote: BTreeMap<&'static str, u32>,
}

fn unit_key(unit: IndentUnit) -> &'static str {
    match unit {
        IndentUnit::Spaces => "spaces",
        IndentUnit::Tabs => "tabs",
    }
}

fn count_file(path: &str, text: &str) -> FileCounts {
    let mut counts = FileCounts::default();
    let mut prev: Option<u32> = None;
    let quotes = QUOTE_LANGUAGES.contains(&extension(path).as_str());
    for (i, line) in split_lines(text).into_iter().enumerate() {
        let lineno = i as u32 + 1;
        match leading(line) {
            Some((unit, depth)) => {
                if let Some(unit) = unit {
                    let key = unit_key(unit);
                    *counts.indent_units.entry(key).or_default() += 1;
                    counts.first_indent.entry(key).or_insert(lineno);
                    // widths are measured on space indentation only
                    if unit == IndentUnit::Spaces {
                        if let Some(p) = prev {
                            if depth > p {
                                *counts.widths.entry(depth - p).or_default() += 1;
                            }
                        }
                    }
                }
                prev = Some(depth);
            }
            None => {
                if !trim_eol(line).trim().is_empty() {
                    prev = None;
                }
            }
        }
        if quotes {
            for (q, _) in quote_openings(trim_eol(line)) {
                let key = if q == '\'' { "single" } else { "double" };
                if q == '\'' {
                    counts.single += 1;
                } else {
                    counts.double += 1;
                }
                counts.first_quote.entry(key).or_insert(lineno);
            }
        }
    }
    counts
}

/// Profiles the repository with the default configuration.
pub fn profile_repository(index: &RepoIndex) -> ConventionProfile {
    profile_repository_with(index, &ConventionConfig::default())
}

pub fn profile_repository_with(index: &RepoIndex, config: &ConventionConfig) -> ConventionProfile {
    let mut naming_counts: BTreeMap<NamingStyle, usize> = BTreeMap::new();
    let mut naming_by_kind: BTreeMap<SymbolKind, BTreeMap<NamingStyle, usize>> = BTreeMap::new();
    let mut samples: BTreeMap<String, EvidenceAnchor> = BTreeMap::new();

    // symbols are stored in path order, so the first hit is deterministic
    let mut symbols: Vec<_> = index
        .symbols()
        .iter()
        .map(|s| {
            (
                index
                    .artifact(&s.artifact_id)
                    .map(|a| a.path.as_str())
                    .unwrap_or(""),
                s,
            )
        })
        .collect();
    symbols.sort_by(|a, b| (a.0, a.1.span, &a.1.name).cmp(&(b.0, b.1.span, &b.1.name)));
    for (_, s) in &symbols {
        let style = classify_identifier_style(&s.name);
        *naming_counts.entry(style).or_default() += 1;
        *naming_by_kind
            .entry(s.symbol_kind)
            .or_default()
            .entry(style)
            .or_default() += 1;
        samples
            .entry(format!("naming:{}", serde_key(style)))
            .or_insert_with(|| EvidenceAnchor {
                artifact_id: s.artifact_id.clone(),
                span: LineRange::single(s.span.start),
                label: format!("{} is {}", s.name, style.label()),
            });
    }
    let naming_distribution = distribution(&naming_counts);
    let dominant_naming = dominant_style(&naming_distribution, config.dominance_threshold);

    let mut units: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut widths: BTreeMap<u32, usize> = BTreeMap::new();
    let (mut single, mut double) = (0usize, 0usize);
    for artifact in index.artifacts() {
        if artifact.kind != ArtifactKind::Source {
            continue;
        }
        let Some(text) = index.contents(&artifact.artifact_id) else {
            continue;
        };
        let c = count_file(&artifact.path, text);
        for (k, n) in c.indent_units {
            *units.entry(k).or_default() += n;
        }
        for (w, n) in c.widths {
            *widths.entry(w).or_default() += n;
        }
        single += c.single;
        double += c.double;
        for (k, line) in c.first_indent {
            samples
                .entry(format!("indentation:{}", k))
                .or_insert_with(|| EvidenceAnchor {
                    artifact_id: artifact.artifact_id.clone(),
                    span: LineRange::single(line),
                    label: format!("indented with {}", k),
                });
        }
        for (k, line) in c.first_quote {
            samples
                .entry(format!("quote_style:{}", k))
                .or_insert_with(|| EvidenceAnchor {
                    artifact_id: artifact.artifact_id.clone(),
                    span: LineRange::single(line),
                    label: format!("{}-quoted string", k),
                });
        }
    }

    let spaces = units.get("spaces").copied().unwrap_or(0);
    let tabs = units.get("tabs").copied().unwrap_or(0);
    let (indentation, indentation_share) = if spaces + tabs == 0 {
        (None, 0.0)
    } else if tabs > spaces {
        (
            Some(Indentation {
                unit: IndentUnit::Tabs,
                width: 1,
            }),
            tabs as f64 / (spaces + tabs) as f64,
        )
    } else {
        // most frequent step; the smaller width wins a tie
        let width = widths
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(w, _)| *w);
        match width {
            Some(width) => (
                Some(Indentation {
                    unit: IndentUnit::Spaces,
                    width,
                }),
                spaces as f64 / (spaces + tabs) as f64,
            ),
            None => (None, 0.0),
        }
    };

    let quote_style = match (single, double) {
        (0, 0) => QuoteStyle::NotApplicable,
        (s, d) if s > d => QuoteStyle::Single,
        (s, d) if d > s => QuoteStyle::Double,
        _ => QuoteStyle::Mixed,
    };
    let mut quote_counts = BTreeMap::new();
    quote_counts.insert("single".to_string(), single);
    quote_counts.insert("double".to_string(), double);

    let structure = config
        .rules
        .iter()
        .filter_map(|rule| {
            let m = RuleMatcher::new(rule)?;
            let mut stat = StructureStat {
                rule: rule.clone(),
                subject: 0,
                conforming: 0,
            };
            for a in index.artifacts() {
                if m.is_subject(&a.path) {
                    stat.subject += 1;
                    stat.conforming += m.conforms(&a.path) as usize;
                }
            }
            Some(stat)
        })
        .collect();

    ConventionProfile {
        naming_distribution,
        naming_counts,
        naming_by_kind,
        dominant_naming,
        indentation,
        indentation_share,
        quote_style,
        quote_counts,
        structure,
        sample_anchors: samples,
        dominance_threshold: config.dominance_threshold,
    }
}

fn serde_key(style: NamingStyle) -> String {
    serde_json::to_value(style)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

struct RuleMatcher {
    full: GlobMatcher,
    name: GlobMatcher,
}

impl RuleMatcher {
    fn new(rule: &StructureRule) -> Option<Self> {
        let build = |p: &str| {
            GlobBuilder::new(p)
                .literal_separator(true)
                .build()
                .map(|g| g.compile_matcher())
        };
        let last = rule
            .glob_pattern
            .rsplit('/')
            .next()
            .unwrap_or(&rule.glob_pattern);
        match (build(&rule.glob_pattern), build(last)) {
            (Ok(full), Ok(name)) => Some(RuleMatcher { full, name }),
            _ => {
                tracing::warn!("structure rule {:?} has an invalid pattern", rule.name);
                None
            }
        }
    }

    fn is_subject(&self, path: &str) -> bool {
        self.name.is_match(path.rsplit('/').next().unwrap_or(path))
    }

    fn conforms(&self, path: &str) -> bool {
        self.full.is_match(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adherence {
    Followed,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConventionFinding {
    pub convention: String,
    pub rationale: String,
    pub adherence: Adherence,
    /// Post-state lines of the modified file showing the convention (or
    /// the first violation of it). Always present when violated.
    pub example_span: Option<EvidenceAnchor>,
}

fn percent(f: f64) -> String {
    format!("{:.1}%", f * 100.0)
}

struct Check {
    first_conforming: Option<(u32, String)>,
    first_violation: Option<(u32, String)>,
}

impl Check {
    fn new() -> Self {
        Check {
            first_conforming: None,
            first_violation: None,
        }
    }

    fn record(&mut self, ok: bool, line: u32, label: String) {
        let slot = if ok {
            &mut self.first_conforming
        } else {
            &mut self.first_violation
        };
        if slot.is_none() {
            *slot = Some((line, label));
        }
    }

    fn finish(self, id: &ArtifactId, convention: String, rationale: String) -> ConventionFinding {
        let anchor = |(line, label): (u32, String)| EvidenceAnchor {
            artifact_id: id.clone(),
            span: LineRange::single(line),
            label,
        };
        let (adherence, example_span) = match (self.first_violation, self.first_conforming) {
            (Some(v), _) => (Adherence::Violated, Some(anchor(v))),
            (None, Some(c)) => (Adherence::Followed, Some(anchor(c))),
            (None, None) => (Adherence::NotApplicable, None),
        };
        let rationale = if adherence == Adherence::NotApplicable {
            format!("{}; the change adds nothing it applies to", rationale)
        } else {
            rationale
        };
        ConventionFinding {
            convention,
            rationale,
            adherence,
            example_span,
        }
    }
}

fn not_applicable(convention: &str, rationale: String) -> ConventionFinding {
    ConventionFinding {
        convention: convention.to_string(),
        rationale,
        adherence: Adherence::NotApplicable,
        example_span: None,
    }
}

/// One finding each for naming, indentation and quote style, plus one per
/// structure rule the modified file is subject to.
///
/// Anchors point into the post-state of the modified file. Only added lines
/// are checked; a finding with nothing to check is not applicable.
pub fn check_adherence(
    modification: &FileModification,
    profile: &ConventionProfile,
) -> Vec<ConventionFinding> {
    let id = ArtifactId::for_path(&modification.path);
    let added: Vec<(u32, &str)> = modification
        .hunks
        .iter()
        .flat_map(|h| h.added_with_lines())
        .collect();
    let mut findings = Vec::new();

    // naming
    match profile.dominant_naming {
        None => findings.push(not_applicable(
            "naming",
            match profile.naming_distribution.iter().max_by(|a, b| a.1.total_cmp(b.1)) {
                Some((style, f)) => format!(
                    "no naming style reaches {} of repository symbols; the most common, {}, covers {}",
                    percent(profile.dominance_threshold),
                    style.label(),
                    percent(*f)
                ),
                None => "the repository defines no symbols to infer a naming style from".to_string(),
            },
        )),
        Some(dominant) => {
            let total: usize = profile.naming_counts.values().sum();
            let mut check = Check::new();
            for s in &modification.introduced_symbols {
                let style = classify_identifier_style(&s.name);
                let kind_dominant = profile
                    .naming_by_kind
                    .get(&s.symbol_kind)
                    .and_then(|c| dominant_style(&distribution(c), profile.dominance_threshold));
                let ok = style == NamingStyle::Ambiguous || style == dominant || Some(style) == kind_dominant;
                check.record(ok, s.line, format!("{} is {}", s.name, style.label()));
            }
            findings.push(check.finish(
                &id,
                format!("naming: {}", dominant.label()),
                format!(
                    "{} of {} repository symbols use {}",
                    percent(profile.naming_distribution[&dominant]),
                    total,
                    dominant.label()
                ),
            ));
        }
    }

    // indentation
    match profile.indentation {
        None => findings.push(not_applicable(
            "indentation",
            "no consistently indented source lines were found in the repository".to_string(),
        )),
        Some(ind) => {
            let mut check = Check::new();
            for (line, text) in &added {
                let ok = match leading(text) {
                    None if text.trim().is_empty() => continue,
                    None => false,
                    Some((None, _)) => continue,
                    Some((Some(unit), depth)) => unit == ind.unit && depth % ind.width == 0,
                };
                check.record(
                    ok,
                    *line,
                    if ok {
                        "indentation matches".into()
                    } else {
                        "indentation differs".into()
                    },
                );
            }
            let desc = match ind.unit {
                IndentUnit::Spaces => format!("{} spaces", ind.width),
                IndentUnit::Tabs => "tabs".to_string(),
            };
            findings.push(check.finish(
                &id,
                format!("indentation: {}", desc),
                format!(
                    "{} of homogeneously indented repository lines use {}",
                    percent(profile.indentation_share),
                    unit_key(ind.unit)
                ),
            ));
        }
    }

    // quote style
    let quoted = QUOTE_LANGUAGES.contains(&extension(&modification.path).as_str());
    match profile.quote_style {
        QuoteStyle::Single | QuoteStyle::Double if quoted => {
            let want = if profile.quote_style == QuoteStyle::Single {
                '\''
            } else {
                '"'
            };
            let name = if want == '\'' { "single" } else { "double" };
            let mut check = Check::new();
            for (line, text) in &added {
                for (q, body) in quote_openings(text) {
                    // the other delimiter is fine when the body needs it
                    let ok = q == want || body.contains(want);
                    check.record(
                        ok,
                        *line,
                        format!(
                            "{}-quoted string",
                            if q == '\'' { "single" } else { "double" }
                        ),
                    );
                }
            }
            let total = profile.quote_counts.values().sum::<usize>().max(1);
            let share = profile.quote_counts.get(name).copied().unwrap_or(0) as f64 / total as f64;
            findings.push(check.finish(
                &id,
                format!("quote style: {}", name),
                format!(
                    "{} of repository string literals use {} quotes",
                    percent(share),
                    name
                ),
            ));
        }
        QuoteStyle::Single | QuoteStyle::Double => findings.push(not_applicable(
            "quote style",
            format!(
                "{} is not in a language with a string delimiter convention",
                modification.path
            ),
        )),
        QuoteStyle::Mixed => findings.push(not_applicable(
            "quote style",
            "repository string literals use single and double quotes equally".to_string(),
        )),
        QuoteStyle::NotApplicable => findings.push(not_applicable(
            "quote style",
            "the repository has no string literals in quote-sensitive languages".to_string(),
        )),
    }

    // structure
    for stat in &profile.structure {
        let Some(m) = RuleMatcher::new(&stat.rule) else {
            continue;
        };
        if !m.is_subject(&modification.path) {
            continue;
        }
        let share = if stat.subject == 0 {
            0.0
        } else {
            stat.conforming as f64 / stat.subject as f64
        };
        if stat.subject == 0 || share < profile.dominance_threshold {
            findings.push(not_applicable(
                &stat.rule.name,
                format!(
                    "{} of {} matching repository files follow {}; below {}",
                    stat.conforming,
                    stat.subject,
                    stat.rule.glob_pattern,
                    percent(profile.dominance_threshold)
                ),
            ));
            continue;
        }
        let ok = m.conforms(&modification.path);
        let mut check = Check::new();
        if let Some((line, _)) = added.first() {
            check.record(
                ok,
                *line,
                format!(
                    "{} placed at {}",
                    modification.path,
                    if ok {
                        "the expected location"
                    } else {
                        "an unexpected location"
                    }
                ),
            );
        }
        findings.push(check.finish(
            &id,
            stat.rule.name.clone(),
            format!(
                "{} of {} matching repository files follow {}. {}",
                stat.conforming, stat.subject, stat.rule.glob_pattern, stat.rule.description
            ),
        ));
    }
    findings
}
