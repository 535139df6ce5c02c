use std::fmt;

use serde::{Deserialize, Serialize};

use super::diff::{diff_lines, split_lines, LineDiff};
use super::parse::{parse_functions, FunctionSpan};

/// A commit's change to exactly one function, with both versions of its body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionModification {
    pub commit_hash: String,
    pub file: String,
    pub function_name: String,
    pub function_before: String,
    pub function_after: String,
    /// 1-based, relative to `function_before`.
    pub deleted_lines_local: Vec<usize>,
    /// 1-based, relative to `function_after`.
    pub added_lines_local: Vec<usize>,
    pub commit_message: String,
}

/// Why a change could not be pinned to a single function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalizeFailure {
    NoChange,
    OutsideFunction,
    MultiFunction,
    NameMismatch,
    UnparseableBefore,
    UnparseableAfter,
}

impl fmt::Display for LocalizeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NoChange => "no-change",
            Self::OutsideFunction => "outside-function",
            Self::MultiFunction => "multi-function",
            Self::NameMismatch => "name-mismatch",
            Self::UnparseableBefore => "unparseable-before",
            Self::UnparseableAfter => "unparseable-after",
        };
        f.write_str(s)
    }
}

/// The function-level part of a [`FunctionModification`], before commit
/// metadata is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalizedChange {
    pub function_name: String,
    pub before_span: FunctionSpan,
    pub after_span: FunctionSpan,
    pub function_before: String,
    pub function_after: String,
    pub deleted_lines_local: Vec<usize>,
    pub added_lines_local: Vec<usize>,
}

impl LocalizedChange {
    pub fn into_modification(
        self,
        commit_hash: impl Into<String>,
        file: impl Into<String>,
        commit_message: impl Into<String>,
    ) -> FunctionModification {
        FunctionModification {
            commit_hash: commit_hash.into(),
            file: file.into(),
            function_name: self.function_name,
            function_before: self.function_before,
            function_after: self.function_after,
            deleted_lines_local: self.deleted_lines_local,
            added_lines_local: self.added_lines_local,
            commit_message: commit_message.into(),
        }
    }
}

/// Index of the single span holding every line, if there is one.
fn owning_span(spans: &[FunctionSpan], lines: &[usize]) -> Result<Option<usize>, LocalizeFailure> {
    let mut owner = None;
    for &line in lines {
        let idx = spans
            .iter()
            .position(|s| s.contains(line))
            .ok_or(LocalizeFailure::OutsideFunction)?;
        match owner {
            None => owner = Some(idx),
            Some(o) if o != idx => return Err(LocalizeFailure::MultiFunction),
            _ => {}
        }
    }
    Ok(owner)
}

/// Finds the counterpart of `span` on the other side through its unchanged
/// lines. Prefers a same-name match; otherwise reports what was found.
fn counterpart(
    span: &FunctionSpan,
    others: &[FunctionSpan],
    map: impl Fn(usize) -> Option<usize>,
) -> Result<usize, LocalizeFailure> {
    let mut other_name = false;
    for line in span.start_line..=span.end_line {
        let Some(m) = map(line) else { continue };
        if let Some(i) = others.iter().position(|s| s.contains(m)) {
            if others[i].name == span.name {
                return Ok(i);
            }
            other_name = true;
        }
    }
    Err(if other_name {
        LocalizeFailure::NameMismatch
    } else {
        LocalizeFailure::OutsideFunction
    })
}

fn slice_lines(lines: &[&str], span: &FunctionSpan) -> String {
    lines[span.start_line - 1..span.end_line.min(lines.len())].concat()
}

/// Pins the change described by `diff` to a single function.
///
/// Every deleted line must fall in one function of `before_file`, every
/// added line in one function of `after_file`, and the two must carry the
/// same name. Local line sets are recomputed by diffing the two function
/// bodies, so re-diffing a stored modification reproduces them exactly.
pub fn localize(
    before_file: &str,
    after_file: &str,
    diff: &LineDiff,
) -> Result<LocalizedChange, LocalizeFailure> {
    if diff.is_empty() {
        return Err(LocalizeFailure::NoChange);
    }
    let before_spans =
        parse_functions(before_file).map_err(|_| LocalizeFailure::UnparseableBefore)?;
    let after_spans = parse_functions(after_file).map_err(|_| LocalizeFailure::UnparseableAfter)?;

    let before_idx = owning_span(&before_spans, &diff.deleted_lines)?;
    let after_idx = owning_span(&after_spans, &diff.added_lines)?;

    let (b, a) = match (before_idx, after_idx) {
        (Some(b), Some(a)) => (b, a),
        (Some(b), None) => (
            b,
            counterpart(&before_spans[b], &after_spans, |l| diff.map_unchanged(l))?,
        ),
        (None, Some(a)) => (
            counterpart(&after_spans[a], &before_spans, |l| diff.map_unchanged_back(l))?,
            a,
        ),
        (None, None) => return Err(LocalizeFailure::NoChange),
    };
    let before_span = before_spans[b].clone();
    let after_span = after_spans[a].clone();
    if before_span.name != after_span.name {
        return Err(LocalizeFailure::NameMismatch);
    }

    let function_before = slice_lines(&split_lines(before_file), &before_span);
    let function_after = slice_lines(&split_lines(after_file), &after_span);
    if function_before == function_after {
        return Err(LocalizeFailure::NoChange);
    }
    let local = diff_lines(&function_before, &function_after);
    Ok(LocalizedChange {
        function_name: before_span.name.clone(),
        before_span,
        after_span,
        function_before,
        function_after,
        deleted_lines_local: local.deleted_lines,
        added_lines_local: local.added_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BEFORE: &str = "\
int limit = 10;

int f(int x)
{
    return x + 1;
}

int g(int y)
{
    return y * 2;
}
";

    fn run(after: &str) -> Result<LocalizedChange, LocalizeFailure> {
        localize(BEFORE, after, &diff_lines(BEFORE, after))
    }

    #[test]
    fn edit_inside_one_function() {
        let after = BEFORE.replace("x + 1", "x + 2");
        let m = run(&after).unwrap();
        assert_eq!(m.function_name, "f");
        assert_eq!(m.before_span.start_line, 3);
        // line 5 of the file is line 3 of the function
        assert_eq!(m.deleted_lines_local, vec![3]);
        assert_eq!(m.added_lines_local, vec![3]);
        assert_eq!(m.function_before, "int f(int x)\n{\n    return x + 1;\n}\n");
    }

    #[test]
    fn edits_in_two_functions() {
        let after = BEFORE.replace("x + 1", "x + 2").replace("y * 2", "y * 3");
        assert_eq!(run(&after).unwrap_err(), LocalizeFailure::MultiFunction);
    }

    #[test]
    fn global_initializer_only() {
        let after = BEFORE.replace("limit = 10", "limit = 20");
        assert_eq!(run(&after).unwrap_err(), LocalizeFailure::OutsideFunction);
    }

    #[test]
    fn signature_edit_counts_as_inside() {
        let after = BEFORE.replace("int f(int x)", "int f(long x)");
        let m = run(&after).unwrap();
        assert_eq!(m.function_name, "f");
        assert_eq!(m.deleted_lines_local, vec![1]);
    }

    #[test]
    fn rename_is_a_name_mismatch() {
        let after = BEFORE.replace("int g(int y)", "int h(int y)");
        assert_eq!(run(&after).unwrap_err(), LocalizeFailure::NameMismatch);
    }

    #[test]
    fn insertion_only_and_deletion_only() {
        let after = BEFORE.replace("    return y * 2;\n", "    y += 1;\n    return y * 2;\n");
        let ins = run(&after).unwrap();
        assert_eq!(ins.function_name, "g");
        assert!(ins.deleted_lines_local.is_empty());
        assert_eq!(ins.added_lines_local, vec![3]);

        let back = localize(&after, BEFORE, &diff_lines(&after, BEFORE)).unwrap();
        assert_eq!(back.function_name, "g");
        assert_eq!(back.deleted_lines_local, vec![3]);
        assert!(back.added_lines_local.is_empty());
    }

    #[test]
    fn no_change() {
        assert_eq!(run(BEFORE).unwrap_err(), LocalizeFailure::NoChange);
    }

    #[test]
    fn unbalanced_after_side() {
        let after = BEFORE.replace("return y * 2;\n}", "return y * 2;\n");
        assert_eq!(run(&after).unwrap_err(), LocalizeFailure::UnparseableAfter);
    }

    #[test]
    fn whitespace_only_change_counts() {
        let after = BEFORE.replace("    return x + 1;", "\treturn x + 1;");
        let m = run(&after).unwrap();
        assert_ne!(m.function_before, m.function_after);
    }
}
