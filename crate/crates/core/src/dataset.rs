//! Labeled samples, the per-project stratified temporal split and class
//! weighting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{self, Provenance, RecordError};
use crate::triage::{bundle_for, Decision, TriageError, TriageVerdict, Transition};
use crate::types::{Candidate, Label};

pub const CORPUS_FORMAT: &str = "corpus";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSample {
    pub id: String,
    pub project: String,
    pub commit_hash: String,
    pub label: Label,
    pub transition: Transition,
    pub function_before: String,
    pub function_after: String,
    pub deleted_lines_local: Vec<usize>,
    pub added_lines_local: Vec<usize>,
    pub commit_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert_commit_message: Option<String>,
    pub commit_time: i64,
    pub split: Option<Split>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("verdict {0} has no matching candidate")]
    DanglingVerdict(String),
    #[error("candidate {0} appears more than once")]
    DuplicateCandidate(String),
    #[error("verdict {id} is for a {verdict} candidate but the candidate is {candidate}")]
    KindMismatch {
        id: String,
        verdict: Label,
        candidate: Label,
    },
    #[error("kept verdict {0} has no transition")]
    MissingTransition(String),
    #[error(transparent)]
    Bundle(#[from] TriageError),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("class weight needs at least one defective sample")]
    NoPositives,
    #[error("sample {0} has no split assigned")]
    Unsplit(String),
    #[error(transparent)]
    Records(#[from] RecordError),
}

/// Joins kept verdicts to their candidates by candidate id. Discarded
/// verdicts are dropped; a verdict without a candidate is an error.
pub fn assemble(
    verdicts: &[TriageVerdict],
    candidates: &[Candidate],
) -> Result<Vec<DatasetSample>, DatasetError> {
    let mut by_id: HashMap<String, &Candidate> = HashMap::new();
    for c in candidates {
        let id = bundle_for(c)?.candidate_id;
        if by_id.insert(id.clone(), c).is_some() {
            return Err(DatasetError::DuplicateCandidate(id));
        }
    }
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for v in verdicts {
        if !seen.insert(v.candidate_id.as_str()) {
            return Err(DatasetError::DuplicateCandidate(v.candidate_id.clone()));
        }
        let cand = by_id
            .get(&v.candidate_id)
            .ok_or_else(|| DatasetError::DanglingVerdict(v.candidate_id.clone()))?;
        if cand.kind != v.kind {
            return Err(DatasetError::KindMismatch {
                id: v.candidate_id.clone(),
                verdict: v.kind,
                candidate: cand.kind,
            });
        }
        if v.decision == Decision::Discard {
            continue;
        }
        let transition = v
            .transition
            .ok_or_else(|| DatasetError::MissingTransition(v.candidate_id.clone()))?;
        let m = &cand.modification;
        samples.push(DatasetSample {
            id: v.candidate_id.clone(),
            project: cand.project.clone(),
            commit_hash: m.commit_hash.clone(),
            label: transition.label(),
            transition,
            function_before: m.function_before.clone(),
            function_after: m.function_after.clone(),
            deleted_lines_local: m.deleted_lines_local.clone(),
            added_lines_local: m.added_lines_local.clone(),
            commit_message: m.commit_message.clone(),
            revert_commit_message: cand.revert.as_ref().map(|r| r.revert_message.clone()),
            commit_time: cand.commit_time,
            split: None,
        });
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let r = [self.train, self.valid, self.test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(r));
        }
        Ok(())
    }

    /// (train, valid, test) sizes for a stratum of `n` samples. Valid and test
    /// get floored shares; a stratum of three or more with an empty valid
    /// share gets one valid sample. Strata under three go wholly to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return (n, 0, 0);
        }
        let share = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let mut valid = share(self.valid);
        let test = share(self.test);
        if valid == 0 && self.valid > 0.0 {
            valid = 1;
        }
        let train = n.saturating_sub(valid + test);
        (train, valid, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub project: String,
    pub label: Label,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub strata: Vec<StratumCounts>,
    /// split -> label -> count
    pub totals: BTreeMap<Split, BTreeMap<Label, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weight: Option<ClassWeight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_class_weight: Option<ClassWeight>,
    pub warnings: Vec<String>,
}

/// Assigns splits in place and returns the samples ordered by project,
/// label, then commit time and hash.
pub fn temporal_split(
    mut samples: Vec<DatasetSample>,
    ratios: SplitRatios,
) -> Result<(Vec<DatasetSample>, SplitSummary), DatasetError> {
    ratios.validate()?;
    samples.sort_by(|a, b| {
        (&a.project, a.label, a.commit_time, &a.commit_hash, &a.id)
            .cmp(&(&b.project, b.label, b.commit_time, &b.commit_hash, &b.id))
    });
    let mut strata = Vec::new();
    let mut warnings = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let key = (samples[start].project.clone(), samples[start].label);
        let end = samples[start..]
            .iter()
            .position(|s| (s.project.as_str(), s.label) != (key.0.as_str(), key.1))
            .map_or(samples.len(), |p| start + p);
        let n = end - start;
        let (train, valid, test) = ratios.counts(n);
        if n < 3 {
            let w = format!(
                "stratum {}/{} has {n} sample(s); all assigned to train",
                key.0, key.1
            );
            log::warn!("{w}");
            warnings.push(w);
        }
        for (i, s) in samples[start..end].iter_mut().enumerate() {
            s.split = Some(if i < train {
                Split::Train
            } else if i < train + valid {
                Split::Valid
            } else {
                Split::Test
            });
        }
        strata.push(StratumCounts {
            project: key.0,
            label: key.1,
            train,
            valid,
            test,
        });
        start = end;
    }

    let mut totals: BTreeMap<Split, BTreeMap<Label, usize>> = BTreeMap::new();
    for s in &samples {
        *totals
            .entry(s.split.expect("assigned above"))
            .or_default()
            .entry(s.label)
            .or_default() += 1;
    }
    let train: Vec<_> = samples
        .iter()
        .filter(|s| s.split == Some(Split::Train))
        .cloned()
        .collect();
    let summary = SplitSummary {
        strata,
        totals,
        class_weight: class_weight(&samples).ok(),
        train_class_weight: class_weight(&train).ok(),
        warnings,
    };
    Ok((samples, summary))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Positive-class weight N_neg / N_pos, kept as exact counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassWeight {
    pub negatives: u64,
    pub positives: u64,
}

impl ClassWeight {
    pub fn new(negatives: u64, positives: u64) -> Result<Self, DatasetError> {
        if positives == 0 {
            return Err(DatasetError::NoPositives);
        }
        Ok(Self {
            negatives,
            positives,
        })
    }

    /// Lowest-terms numerator and denominator.
    pub fn reduced(&self) -> (u64, u64) {
        let g = gcd(self.negatives, self.positives).max(1);
        (self.negatives / g, self.positives / g)
    }

    pub fn value(&self) -> f64 {
        self.negatives as f64 / self.positives as f64
    }

    /// Decimal rendering rounded half-up at the sixth place, computed in
    /// integers.
    pub fn render(&self) -> String {
        let (n, p) = (self.negatives as u128, self.positives as u128);
        let micro = (n * 2_000_000 + p) / (2 * p);
        format!("{}.{:06}", micro / 1_000_000, micro % 1_000_000)
    }
}

impl fmt::Display for ClassWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn class_weight(samples: &[DatasetSample]) -> Result<ClassWeight, DatasetError> {
    let pos = samples.iter().filter(|s| s.label == Label::Defective).count() as u64;
    ClassWeight::new(samples.len() as u64 - pos, pos)
}

pub fn serialize(
    samples: &[DatasetSample],
    path: &Path,
    prov: &Provenance,
) -> Result<(), DatasetError> {
    if let Some(s) = samples.iter().find(|s| s.split.is_none()) {
        return Err(DatasetError::Unsplit(s.id.clone()));
    }
    records::write_records(path, prov, samples)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Option<Provenance>, Vec<DatasetSample>), DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| RecordError::io(path, e))?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<(Option<Provenance>, Vec<DatasetSample>), DatasetError> {
    let (header, samples): (_, Vec<DatasetSample>) =
        records::parse_records(text.as_bytes(), CORPUS_FORMAT)?;
    let mut ids = HashSet::new();
    for (line, s) in data_lines(text).zip(&samples) {
        let bad = |message: String| RecordError::Schema { line, message };
        if s.split.is_none() {
            return Err(bad("`split` is missing".into()).into());
        }
        if s.label != s.transition.label() {
            return Err(bad(format!(
                "label {} contradicts transition {:?}",
                s.label, s.transition
            ))
            .into());
        }
        if !ids.insert(s.id.as_str()) {
            return Err(bad(format!("duplicate id {}", s.id)).into());
        }
    }
    Ok((header, samples))
}

/// 1-based line numbers of record lines (non-empty lines after the header).
fn data_lines(text: &str) -> impl Iterator<Item = usize> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .skip(1)
        .map(|(i, _)| i + 1)
}
