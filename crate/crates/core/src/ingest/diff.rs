//! Unified-diff hunks: parsing, rendering, applying and computing.
//!
//! Hunk headers follow the usual convention: a zero-length side names the
//! line *before* the (empty) range, so `@@ -0,0 +1,3 @@` creates a file and
//! `@@ -4,0 +5,2 @@` inserts two lines after pre-image line 4.

use serde::{Deserialize, Serialize};
use similar::{Algorithm, DiffTag};

use crate::error::{Error, Result};
use crate::index::LineRange;
use crate::lines::split_lines;

const NO_NEWLINE_MARKER: &str = "\\ No newline at end of file";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Added,
    Removed,
}

impl LineKind {
    fn prefix(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Added => '+',
            LineKind::Removed => '-',
        }
    }
}

/// One body line of a hunk. `text` excludes the `\n` terminator; `eol` is
/// false only for a final line that has none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
    pub eol: bool,
}

impl HunkLine {
    fn raw(&self) -> String {
        let mut s = self.text.clone();
        if self.eol {
            s.push('\n');
        }
        s
    }

    fn matches(&self, line: &str) -> bool {
        match line.strip_suffix('\n') {
            Some(body) => self.eol && body == self.text,
            None => !self.eol && line == self.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeHunk {
    pub pre_start: u32,
    pub pre_len: u32,
    pub post_start: u32,
    pub post_len: u32,
    pub lines: Vec<HunkLine>,
}

impl ChangeHunk {
    /// Pre-image lines covered by this hunk; `None` for a pure insertion.
    pub fn pre_range(&self) -> Option<LineRange> {
        span(self.pre_start, self.pre_len)
    }

    /// Post-image lines covered by this hunk; `None` for a pure removal.
    pub fn post_range(&self) -> Option<LineRange> {
        span(self.post_start, self.post_len)
    }

    pub fn added_lines(&self) -> impl Iterator<Item = &str> {
        self.lines_of(LineKind::Added)
    }

    pub fn removed_lines(&self) -> impl Iterator<Item = &str> {
        self.lines_of(LineKind::Removed)
    }

    /// Added lines paired with their 1-based post-image line numbers.
    pub fn added_with_lines(&self) -> Vec<(u32, &str)> {
        let mut line = self.post_first_index() + 1;
        let mut out = Vec::new();
        for l in &self.lines {
            match l.kind {
                LineKind::Context => line += 1,
                LineKind::Added => {
                    out.push((line, l.text.as_str()));
                    line += 1;
                }
                LineKind::Removed => {}
            }
        }
        out
    }

    pub fn changed_line_count(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.kind != LineKind::Context)
            .count()
    }

    fn lines_of(&self, kind: LineKind) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(move |l| l.kind == kind)
            .map(|l| l.text.as_str())
    }

    /// 0-based index of the first pre-image line this hunk touches.
    fn pre_first_index(&self) -> u32 {
        if self.pre_len == 0 {
            self.pre_start
        } else {
            self.pre_start - 1
        }
    }

    fn post_first_index(&self) -> u32 {
        if self.post_len == 0 {
            self.post_start
        } else {
            self.post_start - 1
        }
    }

    /// The same change seen from the post-image side.
    pub fn inverted(&self) -> ChangeHunk {
        ChangeHunk {
            pre_start: self.post_start,
            pre_len: self.post_len,
            post_start: self.pre_start,
            post_len: self.pre_len,
            lines: self
                .lines
                .iter()
                .map(|l| HunkLine {
                    kind: match l.kind {
                        LineKind::Added => LineKind::Removed,
                        LineKind::Removed => LineKind::Added,
                        LineKind::Context => LineKind::Context,
                    },
                    ..l.clone()
                })
                .collect(),
        }
    }

    fn check_counts(&self) -> std::result::Result<(), String> {
        let pre = self
            .lines
            .iter()
            .filter(|l| l.kind != LineKind::Added)
            .count() as u32;
        let post = self
            .lines
            .iter()
            .filter(|l| l.kind != LineKind::Removed)
            .count() as u32;
        if pre != self.pre_len || post != self.post_len {
            return Err(format!(
                "header declares -{}/+{} lines but body has -{}/+{}",
                self.pre_len, self.post_len, pre, post
            ));
        }
        if (self.pre_len > 0 && self.pre_start == 0) || (self.post_len > 0 && self.post_start == 0)
        {
            return Err("non-empty range starts at line 0".into());
        }
        Ok(())
    }
}

fn span(start: u32, len: u32) -> Option<LineRange> {
    if len == 0 {
        None
    } else {
        LineRange::new(start, start + len - 1)
    }
}

fn parse_range(s: &str, sign: char) -> Option<(u32, u32)> {
    let s = s.strip_prefix(sign)?;
    let (start, len) = match s.split_once(',') {
        Some((a, b)) => (a, b),
        None => (s, "1"),
    };
    let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(start) || !all_digits(len) {
        return None;
    }
    Some((start.parse().ok()?, len.parse().ok()?))
}

fn parse_header(line: &str) -> Result<ChangeHunk> {
    let bad = || Error::Parse(format!("malformed hunk header {:?}", line.trim_end()));
    let rest = line.strip_prefix("@@ ").ok_or_else(bad)?;
    let (ranges, _section) = rest.split_once(" @@").ok_or_else(bad)?;
    let mut parts = ranges.split(' ');
    let (pre_start, pre_len) = parts
        .next()
        .and_then(|p| parse_range(p, '-'))
        .ok_or_else(bad)?;
    let (post_start, post_len) = parts
        .next()
        .and_then(|p| parse_range(p, '+'))
        .ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(ChangeHunk {
        pre_start,
        pre_len,
        post_start,
        post_len,
        lines: Vec::new(),
    })
}

fn is_file_header(line: &str) -> bool {
    const PREFIXES: &[&str] = &[
        "--- ",
        "+++ ",
        "diff ",
        "index ",
        "new file mode",
        "deleted file mode",
        "old mode",
        "new mode",
        "similarity index",
        "rename from",
        "rename to",
    ];
    PREFIXES.iter().any(|p| line.starts_with(p))
}

/// True when the diff text describes a binary change.
pub fn is_binary_diff(diff_text: &str) -> bool {
    diff_text.contains('\0')
        || diff_text
            .lines()
            .any(|l| l.starts_with("Binary files ") || l.starts_with("GIT binary patch"))
}

/// Parses unified-diff text into hunks. File headers (`---`/`+++`, git
/// extended headers) before the first hunk are tolerated and ignored.
pub fn parse_unified_diff(diff_text: &str) -> Result<Vec<ChangeHunk>> {
    if is_binary_diff(diff_text) {
        return Err(Error::Binary {
            path: String::new(),
        });
    }
    let mut hunks: Vec<ChangeHunk> = Vec::new();
    let mut current: Option<ChangeHunk> = None;
    let mut remaining = (0u32, 0u32);

    for (lineno, raw) in split_lines(diff_text).into_iter().enumerate() {
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        if line.starts_with('\\') {
            let last = current
                .as_mut()
                .and_then(|h| h.lines.last_mut())
                .ok_or_else(|| Error::Parse(format!("line {}: stray marker", lineno + 1)))?;
            last.eol = false;
            continue;
        }
        if let Some(hunk) = current.as_mut() {
            if remaining != (0, 0) {
                // Some producers emit an empty context line as a bare newline.
                let (kind, text) = match line.chars().next() {
                    Some(' ') => (LineKind::Context, &line[1..]),
                    Some('+') => (LineKind::Added, &line[1..]),
                    Some('-') => (LineKind::Removed, &line[1..]),
                    None => (LineKind::Context, ""),
                    Some(_) => {
                        return Err(Error::Parse(format!(
                            "line {}: unexpected hunk body line {:?}",
                            lineno + 1,
                            line
                        )))
                    }
                };
                let (pre_left, post_left) = &mut remaining;
                let takes_pre = kind != LineKind::Added;
                let takes_post = kind != LineKind::Removed;
                if (takes_pre && *pre_left == 0) || (takes_post && *post_left == 0) {
                    return Err(Error::Parse(format!(
                        "line {}: hunk body exceeds header counts",
                        lineno + 1
                    )));
                }
                if takes_pre {
                    *pre_left -= 1;
                }
                if takes_post {
                    *post_left -= 1;
                }
                hunk.lines.push(HunkLine {
                    kind,
                    text: text.to_string(),
                    eol: true,
                });
                continue;
            }
        }
        if line.starts_with("@@") {
            if let Some(done) = current.take() {
                hunks.push(done);
            }
            let hunk = parse_header(line)?;
            remaining = (hunk.pre_len, hunk.post_len);
            current = Some(hunk);
            continue;
        }
        if hunks.is_empty() && current.is_none() && is_file_header(line) {
            continue;
        }
        return Err(Error::Parse(format!(
            "line {}: unexpected line outside a hunk {:?}",
            lineno + 1,
            line
        )));
    }
    if remaining != (0, 0) {
        return Err(Error::Parse("diff ends inside a hunk".into()));
    }
    if let Some(done) = current.take() {
        hunks.push(done);
    }

    for (i, hunk) in hunks.iter().enumerate() {
        hunk.check_counts()
            .map_err(|e| Error::Parse(format!("hunk {}: {}", i, e)))?;
        check_eol_placement(hunk).map_err(|e| Error::Parse(format!("hunk {}: {}", i, e)))?;
    }
    check_ordering(&hunks)?;
    Ok(hunks)
}

fn check_eol_placement(hunk: &ChangeHunk) -> std::result::Result<(), String> {
    // A line without newline must be the last line of its side.
    for side in [LineKind::Added, LineKind::Removed] {
        let lines: Vec<&HunkLine> = hunk.lines.iter().filter(|l| l.kind != side).collect();
        if let Some(pos) = lines.iter().position(|l| !l.eol) {
            if pos + 1 != lines.len() {
                return Err("line without trailing newline is not last".into());
            }
        }
    }
    Ok(())
}

fn check_ordering(hunks: &[ChangeHunk]) -> Result<()> {
    for pair in hunks.windows(2) {
        let end = pair[0].pre_first_index() + pair[0].pre_len;
        if pair[1].pre_first_index() < end
            || (pair[1].pre_first_index() == end && pair[0].pre_len == 0 && pair[1].pre_len == 0)
        {
            return Err(Error::Parse(format!(
                "hunks overlap or are out of order at pre-image line {}",
                pair[1].pre_start
            )));
        }
    }
    Ok(())
}

/// Renders hunks back to unified-diff text without file headers.
pub fn render_unified(hunks: &[ChangeHunk]) -> String {
    let mut out = String::new();
    for h in hunks {
        out.push_str(&format!(
            "@@ -{} +{} @@\n",
            render_range(h.pre_start, h.pre_len),
            render_range(h.post_start, h.post_len)
        ));
        for l in &h.lines {
            out.push(l.kind.prefix());
            out.push_str(&l.text);
            out.push('\n');
            if !l.eol {
                out.push_str(NO_NEWLINE_MARKER);
                out.push('\n');
            }
        }
    }
    out
}

fn render_range(start: u32, len: u32) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{},{}", start, len)
    }
}

/// Failure to apply one hunk; `hunk` is its 0-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyFailure {
    pub hunk: usize,
    pub reason: String,
}

impl ApplyFailure {
    pub fn into_error(self, path: &str) -> Error {
        Error::Apply {
            path: path.to_string(),
            hunk: self.hunk,
            reason: self.reason,
        }
    }
}

/// Applies hunks to `pre`, requiring exact context and position matches.
pub fn apply_hunks(pre: &str, hunks: &[ChangeHunk]) -> std::result::Result<String, ApplyFailure> {
    let pre_lines = split_lines(pre);
    let mut out = String::with_capacity(pre.len());
    let mut out_lines = 0u32;
    let mut cursor = 0usize;
    let fail = |hunk: usize, reason: String| ApplyFailure { hunk, reason };

    for (i, hunk) in hunks.iter().enumerate() {
        let begin = hunk.pre_first_index() as usize;
        if begin < cursor || begin > pre_lines.len() {
            return Err(fail(
                i,
                format!(
                    "starts at pre-image line {} outside the remaining {}..{}",
                    begin + 1,
                    cursor + 1,
                    pre_lines.len()
                ),
            ));
        }
        for line in &pre_lines[cursor..begin] {
            push_line(&mut out, line).map_err(|r| fail(i, r))?;
            out_lines += 1;
        }
        cursor = begin;
        if out_lines != hunk.post_first_index() {
            return Err(fail(
                i,
                format!(
                    "post-image start {} does not match position {}",
                    hunk.post_start,
                    out_lines + 1
                ),
            ));
        }
        for l in &hunk.lines {
            match l.kind {
                LineKind::Context | LineKind::Removed => {
                    let Some(actual) = pre_lines.get(cursor) else {
                        return Err(fail(i, "hunk extends past end of pre-image".into()));
                    };
                    if !l.matches(actual) {
                        return Err(fail(
                            i,
                            format!(
                                "pre-image line {} is {:?}, hunk expects {:?}",
                                cursor + 1,
                                actual,
                                l.raw()
                            ),
                        ));
                    }
                    cursor += 1;
                    if l.kind == LineKind::Context {
                        push_line(&mut out, actual).map_err(|r| fail(i, r))?;
                        out_lines += 1;
                    }
                }
                LineKind::Added => {
                    push_line(&mut out, &l.raw()).map_err(|r| fail(i, r))?;
                    out_lines += 1;
                }
            }
        }
    }
    for line in &pre_lines[cursor..] {
        push_line(&mut out, line).map_err(|r| fail(hunks.len().saturating_sub(1), r))?;
    }
    Ok(out)
}

fn push_line(out: &mut String, line: &str) -> std::result::Result<(), String> {
    if !out.is_empty() && !out.ends_with('\n') {
        return Err("content follows a line without trailing newline".into());
    }
    out.push_str(line);
    Ok(())
}

/// Reverses hunks: recovers the pre-image from `post`.
pub fn revert_hunks(post: &str, hunks: &[ChangeHunk]) -> std::result::Result<String, ApplyFailure> {
    let inverted: Vec<ChangeHunk> = hunks.iter().map(ChangeHunk::inverted).collect();
    apply_hunks(post, &inverted)
}

/// Computes the hunks turning `pre` into `post` with `context` lines of
/// surrounding context per hunk.
pub fn diff_texts(pre: &str, post: &str, context: usize) -> Vec<ChangeHunk> {
    let old = split_lines(pre);
    let new = split_lines(post);
    let ops = similar::capture_diff_slices(Algorithm::Myers, &old, &new);
    let to_line = |raw: &str, kind: LineKind| HunkLine {
        kind,
        text: raw.strip_suffix('\n').unwrap_or(raw).to_string(),
        eol: raw.ends_with('\n'),
    };

    let mut hunks = Vec::new();
    for group in similar::group_diff_ops(ops, context) {
        let Some(first) = group.first() else { continue };
        let old_begin = first.old_range().start as u32;
        let new_begin = first.new_range().start as u32;
        let mut lines = Vec::new();
        for op in &group {
            let (tag, old_range, new_range) = op.as_tag_tuple();
            match tag {
                DiffTag::Equal => {
                    lines.extend(old_range.map(|i| to_line(old[i], LineKind::Context)))
                }
                DiffTag::Delete => {
                    lines.extend(old_range.map(|i| to_line(old[i], LineKind::Removed)))
                }
                DiffTag::Insert => {
                    lines.extend(new_range.map(|i| to_line(new[i], LineKind::Added)))
                }
                DiffTag::Replace => {
                    lines.extend(old_range.map(|i| to_line(old[i], LineKind::Removed)));
                    lines.extend(new_range.map(|i| to_line(new[i], LineKind::Added)));
                }
            }
        }
        let pre_len = lines.iter().filter(|l| l.kind != LineKind::Added).count() as u32;
        let post_len = lines.iter().filter(|l| l.kind != LineKind::Removed).count() as u32;
        hunks.push(ChangeHunk {
            pre_start: if pre_len == 0 {
                old_begin
            } else {
                old_begin + 1
            },
            pre_len,
            post_start: if post_len == 0 {
                new_begin
            } else {
                new_begin + 1
            },
            post_len,
            lines,
        });
    }
    hunks
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Line-by-line comparison independent of `apply_hunks`.
    fn same_lines(a: &str, b: &str) -> bool {
        let la: Vec<&str> = a.split('\n').collect();
        let lb: Vec<&str> = b.split('\n').collect();
        la.len() == lb.len() && la.iter().zip(&lb).all(|(x, y)| x == y)
    }

    #[test]
    fn empty_diff_has_no_hunks() {
        assert!(parse_unified_diff("").unwrap().is_empty());
    }

    #[test]
    fn single_insertion_hunk() {
        let pre = "alpha\ngamma\n";
        let expected_post = "alpha\nbeta\ngamma\n";
        let hunks = parse_unified_diff("@@ -1,2 +1,3 @@\n alpha\n+beta\n gamma\n").unwrap();
        assert_eq!(hunks.len(), 1);
        assert_eq!(hunks[0].added_lines().count(), 1);
        let post_range = hunks[0].post_range().unwrap();
        assert_eq!(post_range.len(), 3);
        let applied = apply_hunks(pre, &hunks).unwrap();
        assert!(same_lines(&applied, expected_post));
    }

    #[test]
    fn garbage_header_is_parse_error() {
        assert!(matches!(
            parse_unified_diff("@@ garbage @@\n+x\n"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_unified_diff("@@ -1,a +1 @@\n"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn body_count_mismatch_is_parse_error() {
        assert!(parse_unified_diff("@@ -1,2 +1,2 @@\n a\n").is_err());
        assert!(parse_unified_diff("@@ -1 +1 @@\n a\n b\n").is_err());
    }

    #[test]
    fn context_mismatch_is_apply_error() {
        let hunks = parse_unified_diff("@@ -1,2 +1,2 @@\n a\n-b\n+c\n").unwrap();
        let err = apply_hunks("a\nX\n", &hunks).unwrap_err();
        assert_eq!(err.hunk, 0);
    }

    #[test]
    fn missing_newline_marker_round_trips() {
        let pre = "a\nb";
        let post = "a\nb\n";
        let hunks = diff_texts(pre, post, 3);
        let text = render_unified(&hunks);
        assert!(text.contains(NO_NEWLINE_MARKER));
        let parsed = parse_unified_diff(&text).unwrap();
        assert_eq!(parsed, hunks);
        assert_eq!(apply_hunks(pre, &parsed).unwrap(), post);
        assert_eq!(revert_hunks(post, &parsed).unwrap(), pre);
    }

    #[test]
    fn create_and_delete_shapes() {
        let create = parse_unified_diff("@@ -0,0 +1,2 @@\n+x\n+y\n").unwrap();
        assert_eq!(create[0].pre_range(), None);
        assert_eq!(apply_hunks("", &create).unwrap(), "x\ny\n");
        let delete = parse_unified_diff("@@ -1,2 +0,0 @@\n-x\n-y\n").unwrap();
        assert_eq!(apply_hunks("x\ny\n", &delete).unwrap(), "");
    }

    #[test]
    fn file_headers_are_tolerated() {
        let hunks = parse_unified_diff("--- a/f\n+++ b/f\n@@ -1 +1 @@\n-a\n+b\n").unwrap();
        assert_eq!(hunks.len(), 1);
    }

    #[test]
    fn binary_diff_is_rejected() {
        assert!(matches!(
            parse_unified_diff("Binary files a/x.png and b/x.png differ\n"),
            Err(Error::Binary { .. })
        ));
    }

    #[test]
    fn out_of_order_hunks_rejected() {
        let text = "@@ -5 +5 @@\n-a\n+b\n@@ -1 +1 @@\n-c\n+d\n";
        assert!(matches!(parse_unified_diff(text), Err(Error::Parse(_))));
    }
}
