//! Evidence bundles, three-vote LLM triage and the unanimity rule.

mod cache;
mod run;
mod voter;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extract::FunctionModification;
use crate::miner::RevertLink;
use crate::types::{Candidate, Label};

pub use cache::VoteCache;
pub use run::{request_votes, triage_all, Parked, RateLimiter, TriageConfig, TriageOutcome};
pub use voter::{HttpVoter, StubVoter, VoteRequest, Voter, VoterError, STUB_MODEL_ID};

pub const VOTES_PER_CANDIDATE: usize = 3;

const DEFECTIVE_TEMPLATE: &str = include_str!("../../prompts/defective_v1.txt");
const CLEAN_TEMPLATE: &str = include_str!("../../prompts/clean_v1.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TriageError {
    #[error("defective candidate {0} has no revert link")]
    MissingRevert(String),
    #[error("clean candidate {0} must not carry a revert link")]
    UnexpectedRevert(String),
    #[error("expected {VOTES_PER_CANDIDATE} votes, got {0}")]
    WrongVoteCount(usize),
    #[error("votes belong to different candidates")]
    MixedCandidates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub kind: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverted_commit_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert_commit_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit_message: Option<String>,
    pub function_before: String,
    pub function_after: String,
    pub candidate_id: String,
}

impl EvidenceBundle {
    /// Number of evidence fields carried: four for defective, three for clean.
    pub fn evidence_count(&self) -> usize {
        [
            self.reverted_commit_message.is_some(),
            self.revert_commit_message.is_some(),
            self.commit_message.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
            + 2
    }

    pub fn prompt(&self) -> String {
        let fill = |t: &str| {
            t.replace("{{function_before}}", self.function_before.trim_end())
                .replace("{{function_after}}", self.function_after.trim_end())
        };
        match self.kind {
            Label::Defective => fill(DEFECTIVE_TEMPLATE)
                .replace(
                    "{{reverted_commit_message}}",
                    self.reverted_commit_message.as_deref().unwrap_or("").trim_end(),
                )
                .replace(
                    "{{revert_commit_message}}",
                    self.revert_commit_message.as_deref().unwrap_or("").trim_end(),
                ),
            Label::Clean => fill(CLEAN_TEMPLATE).replace(
                "{{commit_message}}",
                self.commit_message.as_deref().unwrap_or("").trim_end(),
            ),
        }
    }
}

/// Version tag of the prompt template used for `kind`; changes whenever the
/// template text changes.
pub fn prompt_version(kind: Label) -> String {
    let template = match kind {
        Label::Defective => DEFECTIVE_TEMPLATE,
        Label::Clean => CLEAN_TEMPLATE,
    };
    let digest = Sha256::digest(template.as_bytes());
    format!("{}-v1-{}", kind, &hex::encode(digest)[..12])
}

fn content_id(kind: Label, fields: &[Option<&str>]) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    for f in fields {
        // length-prefix so field boundaries cannot shift
        match f {
            Some(s) => {
                h.update(b"\x01");
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            None => h.update(b"\x00"),
        }
    }
    hex::encode(&h.finalize()[..16])
}

pub fn build_bundle(
    kind: Label,
    modification: &FunctionModification,
    revert: Option<&RevertLink>,
) -> Result<EvidenceBundle, TriageError> {
    let (reverted, revert_msg, commit_msg) = match (kind, revert) {
        (Label::Defective, Some(link)) => (
            Some(modification.commit_message.clone()),
            Some(link.revert_message.clone()),
            None,
        ),
        (Label::Defective, None) => {
            return Err(TriageError::MissingRevert(modification.commit_hash.clone()))
        }
        (Label::Clean, None) => (None, None, Some(modification.commit_message.clone())),
        (Label::Clean, Some(_)) => {
            return Err(TriageError::UnexpectedRevert(modification.commit_hash.clone()))
        }
    };
    let candidate_id = content_id(
        kind,
        &[
            Some(&modification.commit_hash),
            reverted.as_deref(),
            revert_msg.as_deref(),
            commit_msg.as_deref(),
            Some(&modification.function_before),
            Some(&modification.function_after),
        ],
    );
    Ok(EvidenceBundle {
        kind,
        reverted_commit_message: reverted,
        revert_commit_message: revert_msg,
        commit_message: commit_msg,
        function_before: modification.function_before.clone(),
        function_after: modification.function_after.clone(),
        candidate_id,
    })
}

pub fn bundle_for(candidate: &Candidate) -> Result<EvidenceBundle, TriageError> {
    build_bundle(candidate.kind, &candidate.modification, candidate.revert.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    A,
    B,
    C,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::A => "A",
            Category::B => "B",
            Category::C => "C",
        })
    }
}

/// Reads the category from the last non-empty line of a response.
///
/// Accepted forms: `A`, `(A)`, `A.`, `**A**`, `Answer: A`, `Category: (B)`.
/// Anything else is unparseable.
pub fn parse_category(response: &str) -> Option<Category> {
    let last = response.lines().rev().find(|l| !l.trim().is_empty())?.trim();
    let lower = last.to_ascii_lowercase();
    let body = ["answer:", "category:", "final answer:"]
        .iter()
        .find_map(|p| lower.strip_prefix(p).map(|_| &last[p.len()..]))
        .unwrap_or(last)
        .trim();
    let body = body.trim_matches(|c| c == '*' || c == '`').trim();
    let body = body.strip_suffix('.').unwrap_or(body);
    let body = body
        .strip_prefix('(')
        .and_then(|b| b.strip_suffix(')'))
        .or_else(|| body.strip_prefix('[').and_then(|b| b.strip_suffix(']')))
        .unwrap_or(body);
    match body {
        "A" => Some(Category::A),
        "B" => Some(Category::B),
        "C" => Some(Category::C),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageVote {
    pub category: Category,
    /// 1-based.
    pub vote_index: u8,
    pub raw_response: String,
    pub model_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Transition {
    DtoD,
    CtoD,
    DtoC,
    CtoC,
}

impl Transition {
    pub fn label(self) -> Label {
        match self {
            Transition::DtoD | Transition::CtoD => Label::Defective,
            Transition::DtoC | Transition::CtoC => Label::Clean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageVerdict {
    pub candidate_id: String,
    pub kind: Label,
    pub votes: Vec<TriageVote>,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Transition>,
    pub prompt_version: String,
}

/// Unanimity rule: keep only when no vote is C. The transition follows the
/// majority category among the three kept votes.
pub fn aggregate(
    candidate_id: &str,
    votes: Vec<TriageVote>,
    kind: Label,
) -> Result<TriageVerdict, TriageError> {
    if votes.len() != VOTES_PER_CANDIDATE {
        return Err(TriageError::WrongVoteCount(votes.len()));
    }
    let count = |c| votes.iter().filter(|v| v.category == c).count();
    let (a, b, c) = (count(Category::A), count(Category::B), count(Category::C));
    let (decision, transition) = if c > 0 {
        (Decision::Discard, None)
    } else {
        let majority_a = a > b;
        let t = match (kind, majority_a) {
            (Label::Defective, true) => Transition::DtoD,
            (Label::Defective, false) => Transition::CtoD,
            (Label::Clean, true) => Transition::DtoC,
            (Label::Clean, false) => Transition::CtoC,
        };
        (Decision::Keep, Some(t))
    };
    let mut votes = votes;
    votes.sort_by_key(|v| v.vote_index);
    Ok(TriageVerdict {
        candidate_id: candidate_id.to_string(),
        kind,
        votes,
        decision,
        transition,
        prompt_version: prompt_version(kind),
    })
}
