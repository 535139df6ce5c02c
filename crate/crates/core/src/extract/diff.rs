//! Line-level diffs between two versions of a file.

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};

/// One contiguous change. Starts are 0-based line indices; an empty range
/// marks the insertion/deletion point on that side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub before_start: usize,
    pub before_len: usize,
    pub after_start: usize,
    pub after_len: usize,
    /// Replacement text for the hunk, line terminators included.
    pub inserted: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiff {
    /// 1-based line numbers in the before text, ascending.
    pub deleted_lines: Vec<usize>,
    /// 1-based line numbers in the after text, ascending.
    pub added_lines: Vec<usize>,
    pub hunks: Vec<Hunk>,
}

/// Splits text into lines, keeping the terminator on each line so that
/// `"a"` and `"a\n"` are different last lines.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

impl LineDiff {
    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    /// Replays the edit script on `before`.
    pub fn apply(&self, before: &str) -> String {
        let lines = split_lines(before);
        let mut out = String::with_capacity(before.len());
        let mut cursor = 0;
        for h in &self.hunks {
            for l in &lines[cursor..h.before_start] {
                out.push_str(l);
            }
            for l in &h.inserted {
                out.push_str(l);
            }
            cursor = h.before_start + h.before_len;
        }
        for l in &lines[cursor..] {
            out.push_str(l);
        }
        out
    }

    /// Maps an unchanged 1-based before line to its after line number.
    /// Returns `None` when the line was deleted.
    pub fn map_unchanged(&self, before_line: usize) -> Option<usize> {
        let idx = before_line.checked_sub(1)?;
        let mut offset: isize = 0;
        for h in &self.hunks {
            if idx < h.before_start {
                break;
            }
            if idx < h.before_start + h.before_len {
                return None;
            }
            offset += h.after_len as isize - h.before_len as isize;
        }
        Some((idx as isize + offset) as usize + 1)
    }

    /// Inverse direction of [`LineDiff::map_unchanged`].
    pub fn map_unchanged_back(&self, after_line: usize) -> Option<usize> {
        let idx = after_line.checked_sub(1)?;
        let mut offset: isize = 0;
        for h in &self.hunks {
            if idx < h.after_start {
                break;
            }
            if idx < h.after_start + h.after_len {
                return None;
            }
            offset += h.before_len as isize - h.after_len as isize;
        }
        Some((idx as isize + offset) as usize + 1)
    }
}

/// Minimal line edit script (Myers) from `before` to `after`.
pub fn diff_lines(before: &str, after: &str) -> LineDiff {
    let old = split_lines(before);
    let new = split_lines(after);
    let ops = capture_diff_slices(Algorithm::Myers, &old, &new);

    let mut diff = LineDiff::default();
    let mut open: Option<Hunk> = None;
    for op in ops {
        let (old_range, new_range) = match op {
            DiffOp::Equal { .. } => {
                if let Some(h) = open.take() {
                    diff.hunks.push(h);
                }
                continue;
            }
            other => (other.old_range(), other.new_range()),
        };
        diff.deleted_lines.extend(old_range.clone().map(|i| i + 1));
        diff.added_lines.extend(new_range.clone().map(|i| i + 1));
        let h = open.get_or_insert_with(|| Hunk {
            before_start: old_range.start,
            before_len: 0,
            after_start: new_range.start,
            after_len: 0,
            inserted: Vec::new(),
        });
        h.before_len += old_range.len();
        h.after_len += new_range.len();
        h.inserted
            .extend(new[new_range].iter().map(|s| (*s).to_string()));
    }
    if let Some(h) = open.take() {
        diff.hunks.push(h);
    }
    diff
}
