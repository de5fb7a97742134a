//! Line-oriented helpers shared by diffing, indexing and anchor resolution.
//!
//! A line is the text up to and including its `\n`; the final line of a file
//! may lack the terminator. `""` has zero lines, `"a"` and `"a\n"` have one.

use crate::error::{Error, Result};
use crate::index::LineRange;

/// Splits `text` into lines, keeping each line's terminator.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

pub fn line_count(text: &str) -> usize {
    text.split_inclusive('\n').count()
}

/// Strips a single trailing `\n` (and a preceding `\r`) from a line.
pub fn trim_eol(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

/// Returns lines `range.start..=range.end` (1-based) verbatim.
pub fn slice(text: &str, range: LineRange) -> Result<&str> {
    let lines = split_lines(text);
    if range.end as usize > lines.len() {
        return Err(Error::Range(format!(
            "lines {}..{} exceed line count {}",
            range.start,
            range.end,
            lines.len()
        )));
    }
    let mut offset = 0;
    for line in &lines[..range.start as usize - 1] {
        offset += line.len();
    }
    let len: usize = lines[range.start as usize - 1..range.end as usize]
        .iter()
        .map(|l| l.len())
        .sum();
    Ok(&text[offset..offset + len])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_terminator_rules() {
        assert_eq!(line_count(""), 0);
        assert_eq!(line_count("a"), 1);
        assert_eq!(line_count("a\n"), 1);
        assert_eq!(line_count("a\n\n"), 2);
        assert_eq!(line_count("a\nb"), 2);
    }

    #[test]
    fn slice_is_inclusive() {
        let text = "one\ntwo\nthree";
        assert_eq!(
            slice(text, LineRange::new(1, 2).unwrap()).unwrap(),
            "one\ntwo\n"
        );
        assert_eq!(slice(text, LineRange::new(3, 3).unwrap()).unwrap(), "three");
        assert!(matches!(
            slice(text, LineRange::new(2, 4).unwrap()),
            Err(Error::Range(_))
        ));
    }
}
