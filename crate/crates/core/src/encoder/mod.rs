//! The five change encodings under a token budget, and token-length CDFs.

mod tokenizer;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSample;

pub use tokenizer::{Tokenizer, TokenizerError, TokenizerKind, TokenizerSpec};

pub const CHG: &str = "<CHG>";
pub const ADD: &str = "<ADD>";
pub const DEL: &str = "<DEL>";
pub const HUNK: &str = "<HUNK>";
pub const BEFORE: &str = "[Before]:";
pub const AFTER: &str = "[After]:";
pub const ADDED_HEADER: &str = "[ADDED LINES]:";
pub const DELETED_HEADER: &str = "[DELETED LINES]:";

pub const SPECIAL_TOKENS: [&str; 8] = [CHG, ADD, DEL, HUNK, BEFORE, AFTER, ADDED_HEADER, DELETED_HEADER];

pub const DEFAULT_CONTEXT_LINES: usize = 3;
pub const ENCODED_FORMAT: &str = "encoded";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Encoding {
    AfterOnly,
    AfterMarkers,
    BeforeAfter,
    DiffTags,
    AddedDeleted,
}

impl Encoding {
    pub const ALL: [Encoding; 5] = [
        Encoding::AfterOnly,
        Encoding::AfterMarkers,
        Encoding::BeforeAfter,
        Encoding::DiffTags,
        Encoding::AddedDeleted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Encoding::AfterOnly => "after-only",
            Encoding::AfterMarkers => "after-markers",
            Encoding::BeforeAfter => "before-after",
            Encoding::DiffTags => "diff-tags",
            Encoding::AddedDeleted => "added-deleted",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Encoding::ALL
            .into_iter()
            .find(|e| e.name() == norm || format!("{e:?}").to_ascii_lowercase() == norm)
            .ok_or_else(|| {
                format!(
                    "unknown encoding `{s}` (expected one of {})",
                    Encoding::ALL.map(|e| e.name()).join(", ")
                )
            })
    }
}

/// Perturbation applied to an encoded input, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationStamp {
    pub kind: String,
    pub phase: String,
    pub seed: u64,
    /// Whether the randomized perturbation actually fired for this sample.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub sample_id: String,
    pub encoding: Encoding,
    pub tokens: Vec<String>,
    /// True when any content token was dropped to meet the budget.
    pub truncated: bool,
    pub budget_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationStamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("sample {0} has no changed lines")]
    NoChange(String),
    #[error("token CDF of an empty corpus is undefined")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarity {
    Add,
    Del,
    Ctx,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub polarity: Polarity,
    pub text: String,
}

/// Changed lines with local context, grouped into hunks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffView {
    pub hunks: Vec<Vec<DiffLine>>,
}

impl DiffView {
    pub fn lines(&self) -> impl Iterator<Item = &DiffLine> {
        self.hunks.iter().flatten()
    }
}

fn lines_of(text: &str) -> Vec<&str> {
    text.lines().collect()
}

/// Interleaves the two versions using the local line sets: unchanged lines
/// pair up in order, deletions come before additions at each change point.
pub fn diff_view(
    before: &str,
    after: &str,
    deleted: &[usize],
    added: &[usize],
    context: usize,
) -> DiffView {
    let before = lines_of(before);
    let after = lines_of(after);
    let deleted: HashSet<usize> = deleted.iter().copied().collect();
    let added: HashSet<usize> = added.iter().copied().collect();
    let mut all = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < before.len() || j < after.len() {
        if i < before.len() && (deleted.contains(&(i + 1)) || j >= after.len()) {
            all.push(DiffLine {
                polarity: if deleted.contains(&(i + 1)) { Polarity::Del } else { Polarity::Ctx },
                text: before[i].to_string(),
            });
            i += 1;
        } else if j < after.len() && (added.contains(&(j + 1)) || i >= before.len()) {
            all.push(DiffLine {
                polarity: if added.contains(&(j + 1)) { Polarity::Add } else { Polarity::Ctx },
                text: after[j].to_string(),
            });
            j += 1;
        } else {
            all.push(DiffLine {
                polarity: Polarity::Ctx,
                text: after[j].to_string(),
            });
            i += 1;
            j += 1;
        }
    }

    let changed: Vec<usize> = all
        .iter()
        .enumerate()
        .filter(|(_, l)| l.polarity != Polarity::Ctx)
        .map(|(k, _)| k)
        .collect();
    let mut keep = vec![false; all.len()];
    for &k in &changed {
        let lo = k.saturating_sub(context);
        let hi = (k + context).min(all.len() - 1);
        keep[lo..=hi].iter_mut().for_each(|x| *x = true);
    }
    let mut view = DiffView::default();
    let mut current: Vec<DiffLine> = Vec::new();
    for (line, kept) in all.into_iter().zip(keep) {
        if kept {
            current.push(line);
        } else if !current.is_empty() {
            view.hunks.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        view.hunks.push(current);
    }
    view
}

/// Encodes samples with one tokenizer and budget.
pub struct Encoder {
    tok: Tokenizer,
    budget: usize,
    context: usize,
}

fn finish(sample_id: &str, encoding: Encoding, mut tokens: Vec<String>, budget: usize) -> EncodedInput {
    let truncated = tokens.len() > budget;
    tokens.truncate(budget);
    EncodedInput {
        sample_id: sample_id.to_string(),
        encoding,
        budget_used: tokens.len(),
        tokens,
        truncated,
        perturbation: None,
    }
}

impl Encoder {
    pub fn new(tok: Tokenizer, budget: usize) -> Self {
        assert!(budget > 0, "budget must be positive");
        Self {
            tok,
            budget,
            context: DEFAULT_CONTEXT_LINES,
        }
    }

    pub fn from_spec(spec: &TokenizerSpec) -> Result<Self, TokenizerError> {
        Ok(Self::new(spec.build()?, spec.budget))
    }

    pub fn with_context(mut self, context: usize) -> Self {
        self.context = context;
        self
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tok
    }

    /// Capacity of the before-side slot in the before/after encoding.
    pub fn before_cap(&self) -> usize {
        self.budget.saturating_sub(2) / 2
    }

    pub fn encode(&self, sample: &DatasetSample, encoding: Encoding) -> Result<EncodedInput, EncodeError> {
        if sample.added_lines_local.is_empty() && sample.deleted_lines_local.is_empty() {
            return Err(EncodeError::NoChange(sample.id.clone()));
        }
        Ok(match encoding {
            Encoding::AfterOnly => self.after_only(sample),
            Encoding::AfterMarkers => self.after_markers(sample),
            Encoding::BeforeAfter => self.before_after(sample),
            Encoding::DiffTags => self.diff_tags(sample),
            Encoding::AddedDeleted => self.added_deleted(sample),
        })
    }

    pub fn after_only(&self, s: &DatasetSample) -> EncodedInput {
        finish(&s.id, Encoding::AfterOnly, self.tok.tokenize(&s.function_after), self.budget)
    }

    /// Function-after with `marker` prefixed to each line in `marked`
    /// (1-based); markers for lines past the end are appended.
    pub(crate) fn marked_after(&self, s: &DatasetSample, marked: &[usize]) -> Vec<String> {
        let marked_set: HashSet<usize> = marked.iter().copied().collect();
        let lines = lines_of(&s.function_after);
        let mut tokens = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if marked_set.contains(&(i + 1)) {
                tokens.push(CHG.to_string());
            }
            self.tok.tokenize_into(line, &mut tokens);
        }
        let surplus = marked_set.iter().filter(|l| **l == 0 || **l > lines.len()).count();
        tokens.extend(std::iter::repeat_n(CHG.to_string(), surplus));
        tokens
    }

    pub fn after_markers(&self, s: &DatasetSample) -> EncodedInput {
        let tokens = self.marked_after(s, &s.added_lines_local);
        finish(&s.id, Encoding::AfterMarkers, tokens, self.budget)
    }

    /// `[Before]: <before> [After]: <after>` with the before side held to
    /// half of the space left after the two markers.
    pub(crate) fn before_after_from(&self, id: &str, first: &str, second: &str) -> EncodedInput {
        let mut b = self.tok.tokenize(first);
        let mut a = self.tok.tokenize(second);
        let full = 2 + b.len() + a.len();
        let mut truncated = b.len() > self.before_cap();
        b.truncate(self.before_cap());
        let after_cap = self.budget.saturating_sub(2 + b.len());
        truncated |= a.len() > after_cap;
        a.truncate(after_cap);
        let mut tokens = Vec::with_capacity(2 + b.len() + a.len());
        tokens.push(BEFORE.to_string());
        tokens.extend(b);
        tokens.push(AFTER.to_string());
        tokens.extend(a);
        // budgets under 3 cannot hold both markers
        truncated |= full > self.budget;
        tokens.truncate(self.budget);
        EncodedInput {
            sample_id: id.to_string(),
            encoding: Encoding::BeforeAfter,
            budget_used: tokens.len(),
            tokens,
            truncated,
            perturbation: None,
        }
    }

    pub fn before_after(&self, s: &DatasetSample) -> EncodedInput {
        self.before_after_from(&s.id, &s.function_before, &s.function_after)
    }

    pub fn diff_view(&self, s: &DatasetSample) -> DiffView {
        diff_view(
            &s.function_before,
            &s.function_after,
            &s.deleted_lines_local,
            &s.added_lines_local,
            self.context,
        )
    }

    pub fn diff_tags(&self, s: &DatasetSample) -> EncodedInput {
        let view = self.diff_view(s);
        let mut tokens = Vec::new();
        for (h, hunk) in view.hunks.iter().enumerate() {
            if h > 0 {
                tokens.push(HUNK.to_string());
            }
            for line in hunk {
                match line.polarity {
                    Polarity::Add => tokens.push(ADD.to_string()),
                    Polarity::Del => tokens.push(DEL.to_string()),
                    Polarity::Ctx => {}
                }
                self.tok.tokenize_into(&line.text, &mut tokens);
            }
        }
        finish(&s.id, Encoding::DiffTags, tokens, self.budget)
    }

    /// Tokens of the added and deleted lines, in file order.
    pub(crate) fn change_blocks(&self, s: &DatasetSample) -> (Vec<String>, Vec<String>) {
        let pick = |text: &str, wanted: &[usize]| {
            let wanted: HashSet<usize> = wanted.iter().copied().collect();
            let mut out = Vec::new();
            for (i, line) in lines_of(text).iter().enumerate() {
                if wanted.contains(&(i + 1)) {
                    self.tok.tokenize_into(line, &mut out);
                }
            }
            out
        };
        (
            pick(&s.function_after, &s.added_lines_local),
            pick(&s.function_before, &s.deleted_lines_local),
        )
    }

    pub(crate) fn added_deleted_from(&self, id: &str, added: Vec<String>, deleted: Vec<String>) -> EncodedInput {
        let mut tokens = Vec::with_capacity(2 + added.len() + deleted.len());
        tokens.push(ADDED_HEADER.to_string());
        tokens.extend(added);
        tokens.push(DELETED_HEADER.to_string());
        tokens.extend(deleted);
        finish(id, Encoding::AddedDeleted, tokens, self.budget)
    }

    pub fn added_deleted(&self, s: &DatasetSample) -> EncodedInput {
        let (added, deleted) = self.change_blocks(s);
        self.added_deleted_from(&s.id, added, deleted)
    }
}

/// Empirical CDF of function-after token counts as (count, fraction) steps.
pub fn length_cdf(samples: &[DatasetSample], tok: &Tokenizer) -> Result<Vec<(usize, f64)>, EncodeError> {
    if samples.is_empty() {
        return Err(EncodeError::EmptyCorpus);
    }
    let mut counts: Vec<usize> = samples.iter().map(|s| tok.count(&s.function_after)).collect();
    counts.sort_unstable();
    let n = counts.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, c) in counts.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *c => last.1 = frac,
            _ => out.push((*c, frac)),
        }
    }
    Ok(out)
}

/// Fraction of samples whose function-after exceeds `budget` tokens.
pub fn fraction_exceeding(cdf: &[(usize, f64)], budget: usize) -> f64 {
    let at_or_below = cdf
        .iter()
        .take_while(|(c, _)| *c <= budget)
        .last()
        .map_or(0.0, |(_, f)| *f);
    1.0 - at_or_below
}
