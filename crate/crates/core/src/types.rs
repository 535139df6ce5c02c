use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::extract::FunctionModification;
use crate::miner::RevertLink;

/// Class of a candidate or sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Defective,
    Clean,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Defective => "defective",
            Label::Clean => "clean",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "defective" => Ok(Label::Defective),
            "clean" => Ok(Label::Clean),
            other => Err(format!("unknown label `{other}` (expected defective or clean)")),
        }
    }
}

/// A single-function change waiting for triage, as written by `mine` and
/// `screen` and read by `triage`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub project: String,
    pub kind: Label,
    pub commit_time: i64,
    pub modification: FunctionModification,
    /// Present exactly for defective candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert: Option<RevertLink>,
}
