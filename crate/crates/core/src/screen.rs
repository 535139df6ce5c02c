//! Clean-candidate selection and look-ahead history screening.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{decode_source, diff_lines, parse_functions, FunctionModification};
use crate::miner::{detect_reverts, CommitMeta, MineError, Miner, MinerConfig, ScanOutput};
use crate::types::{Candidate, Label};

const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenConfig {
    pub lookahead_commits: usize,
    pub problematic_keywords: Vec<String>,
    pub period_window_days: i64,
    pub require_later_modification: bool,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            lookahead_commits: 5,
            problematic_keywords: ["revert", "rollback", "fix bug", "regression"]
                .map(String::from)
                .to_vec(),
            period_window_days: 90,
            require_later_modification: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScreenConfigError {
    #[error("lookahead_commits must be at least 1")]
    ZeroLookahead,
    #[error("problematic_keywords must not be empty")]
    NoKeywords,
    #[error("keyword `{0}` must be lowercase and non-empty")]
    BadKeyword(String),
    #[error("period_window_days must be non-negative")]
    NegativeWindow,
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<(), ScreenConfigError> {
        if self.lookahead_commits == 0 {
            return Err(ScreenConfigError::ZeroLookahead);
        }
        if self.problematic_keywords.is_empty() {
            return Err(ScreenConfigError::NoKeywords);
        }
        if let Some(k) = self
            .problematic_keywords
            .iter()
            .find(|k| k.is_empty() || k.to_lowercase() != **k)
        {
            return Err(ScreenConfigError::BadKeyword(k.clone()));
        }
        if self.period_window_days < 0 {
            return Err(ScreenConfigError::NegativeWindow);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScreenReason {
    KeywordHit,
    NeverModified,
}

/// Outcome of the look-ahead check for one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenVerdict {
    pub commit_hash: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ScreenReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_commit: Option<String>,
    /// Later commits that touched the function, oldest first.
    pub inspected: Vec<String>,
}

/// The first configured keyword found in `message` (case-insensitive).
pub fn first_keyword<'k>(message: &str, keywords: &'k [String]) -> Option<&'k str> {
    let lower = message.to_lowercase();
    keywords
        .iter()
        .find(|k| lower.contains(k.as_str()))
        .map(String::as_str)
}

/// Whether `later` changes the function `name` in `file`. The second value
/// is true when the function no longer exists by that name afterwards.
fn touches_function(
    miner: &Miner,
    later: &CommitMeta,
    file: &str,
    name: &str,
) -> (bool, bool) {
    let [parent] = later.parent_hashes.as_slice() else {
        return (false, false);
    };
    let before = miner.file_at(parent, file).ok().flatten();
    let after = miner.file_at(&later.hash, file).ok().flatten();
    let Some(before) = before else {
        return (false, false);
    };
    let (before, _) = decode_source(&before);
    let Ok(before_spans) = parse_functions(&before) else {
        return (false, false);
    };
    let named_before: Vec<_> = before_spans.iter().filter(|s| s.name == name).collect();
    if named_before.is_empty() {
        return (false, true);
    }
    let Some(after) = after else {
        // file deleted
        return (true, true);
    };
    let (after, _) = decode_source(&after);
    let diff = diff_lines(&before, &after);
    let after_spans = parse_functions(&after).unwrap_or_default();
    let named_after: Vec<_> = after_spans.iter().filter(|s| s.name == name).collect();
    let touched = diff
        .deleted_lines
        .iter()
        .any(|&l| named_before.iter().any(|s| s.contains(l)))
        || diff
            .added_lines
            .iter()
            .any(|&l| named_after.iter().any(|s| s.contains(l)));
    (touched, named_after.is_empty())
}

/// Look-ahead screen over the commits that follow `candidate` in `scan`.
///
/// Up to `lookahead_commits` later commits touching the same function are
/// inspected; any problematic keyword fails the candidate. With
/// `require_later_modification`, a function that is never touched again
/// also fails. Tracking is by file and function name and stops at a rename.
pub fn history_screen(
    miner: &Miner,
    scan: &ScanOutput,
    candidate: &FunctionModification,
    cfg: &ScreenConfig,
) -> ScreenVerdict {
    let mut verdict = ScreenVerdict {
        commit_hash: candidate.commit_hash.clone(),
        passed: false,
        reason: None,
        keyword: None,
        hit_commit: None,
        inspected: Vec::new(),
    };
    let start = scan
        .commits
        .iter()
        .position(|c| c.hash == candidate.commit_hash)
        .map_or(scan.commits.len(), |i| i + 1);

    for later in &scan.commits[start..] {
        if verdict.inspected.len() >= cfg.lookahead_commits {
            break;
        }
        if !later.touched_files.iter().any(|f| *f == candidate.file) {
            continue;
        }
        let (touched, lost) = touches_function(miner, later, &candidate.file, &candidate.function_name);
        if touched {
            verdict.inspected.push(later.hash.clone());
            if let Some(k) = first_keyword(&later.message, &cfg.problematic_keywords) {
                verdict.reason = Some(ScreenReason::KeywordHit);
                verdict.keyword = Some(k.to_string());
                verdict.hit_commit = Some(later.hash.clone());
                return verdict;
            }
        }
        if lost {
            break;
        }
    }
    if cfg.require_later_modification && verdict.inspected.is_empty() {
        verdict.reason = Some(ScreenReason::NeverModified);
        return verdict;
    }
    verdict.passed = true;
    verdict
}

/// Single-function commits near a defective timestamp that are neither
/// reverts nor revert targets.
pub fn sample_clean_pool(
    miner: &Miner,
    scan: &ScanOutput,
    defective_times: &[i64],
    cfg: &ScreenConfig,
) -> Vec<Candidate> {
    if defective_times.is_empty() {
        return Vec::new();
    }
    let reverts = detect_reverts(&scan.commits);
    let excluded: HashSet<&str> = reverts
        .links
        .iter()
        .flat_map(|l| [l.revert_hash.as_str(), l.target_hash.as_str()])
        .collect();
    let window = cfg.period_window_days * DAY;
    scan.commits
        .iter()
        .filter(|c| !excluded.contains(c.hash.as_str()))
        .filter(|c| {
            defective_times
                .iter()
                .any(|t| (c.commit_time - t).abs() <= window)
        })
        .filter_map(|c| {
            miner.filter_single_function(c).ok().map(|m| Candidate {
                project: miner.repo_id().to_string(),
                kind: Label::Clean,
                commit_time: c.commit_time,
                modification: m,
                revert: None,
            })
        })
        .collect()
}

/// Screens candidates in parallel; each worker opens its own handle on the
/// repository. Output order follows input order.
pub fn screen_all(
    repo: &Path,
    miner_cfg: &MinerConfig,
    scan: &ScanOutput,
    candidates: &[Candidate],
    cfg: &ScreenConfig,
) -> Result<Vec<ScreenVerdict>, MineError> {
    // fail early on a bad path rather than inside a worker
    Miner::open(repo, miner_cfg.clone())?;
    candidates
        .par_iter()
        .map_init(
            || Miner::open(repo, miner_cfg.clone()),
            |miner, cand| match miner {
                Ok(m) => Ok(history_screen(m, scan, &cand.modification, cfg)),
                Err(e) => Err(MineError::Git(git2::Error::from_str(&e.to_string()))),
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        ScreenConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_lookahead_rejected() {
        let cfg = ScreenConfig {
            lookahead_commits: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(ScreenConfigError::ZeroLookahead));
    }

    #[test]
    fn keywords_must_be_lowercase_and_present() {
        let mut cfg = ScreenConfig {
            problematic_keywords: vec![],
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(ScreenConfigError::NoKeywords));
        cfg.problematic_keywords = vec!["Revert".into()];
        assert!(matches!(cfg.validate(), Err(ScreenConfigError::BadKeyword(_))));
    }

    #[test]
    fn keyword_match_is_case_insensitive_over_body() {
        let kw = ScreenConfig::default().problematic_keywords;
        assert_eq!(first_keyword("Fix Bug in parser", &kw), Some("fix bug"));
        assert_eq!(first_keyword("tidy\n\nThis fixes a REGRESSION", &kw), Some("regression"));
        assert_eq!(first_keyword("optimize", &kw), None);
    }

    proptest! {
        #[test]
        fn more_keywords_never_unflag(
            msg in "[a-z ]{0,30}",
            base in prop::collection::vec("[a-z]{1,4}", 1..4),
            extra in prop::collection::vec("[a-z]{1,4}", 0..4),
        ) {
            let mut bigger = base.clone();
            bigger.extend(extra);
            if first_keyword(&msg, &base).is_some() {
                prop_assert!(first_keyword(&msg, &bigger).is_some());
            }
        }
    }
}
