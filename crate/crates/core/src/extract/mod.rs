//! Function spans, line diffs and single-function change localization.

mod diff;
mod localize;
mod parse;

pub use diff::{diff_lines, split_lines, Hunk, LineDiff};
pub use localize::{localize, FunctionModification, LocalizeFailure, LocalizedChange};
pub use parse::{decode_source, parse_functions, FunctionSpan, ParseError};
