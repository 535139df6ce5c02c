//! Commit history traversal, single-function filtering and revert anchors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use git2::{Commit, DiffOptions, ErrorCode, ObjectType, Oid, Repository, Sort};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{decode_source, diff_lines, localize, FunctionModification, LocalizeFailure};
use crate::types::{Candidate, Label};

pub const DEFAULT_EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "hpp", "hh"];
pub const MAX_FILE_BYTES: usize = 1 << 20;
const MIN_ABBREV: usize = 7;
const FULL_HASH: usize = 40;

#[derive(Debug, Error)]
pub enum MineError {
    #[error("not a git repository: {path}")]
    NotARepository { path: String },
    #[error("git error: {0}")]
    Git(#[from] git2::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub repo_id: String,
    pub hash: String,
    pub parent_hashes: Vec<String>,
    pub author_time: i64,
    pub commit_time: i64,
    pub message: String,
    pub touched_files: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    FullHash,
    AbbreviatedHash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevertLink {
    pub revert_hash: String,
    pub target_hash: String,
    pub revert_message: String,
    pub match_kind: MatchKind,
}

/// Why a scanned commit did not become a single-function candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    /// Root commit: there is no before side.
    RootCommit,
    FileCount,
    ExtensionGate,
    BinaryOrLarge,
    FileAddedOrDeleted,
    NoChange,
    OutsideFunction,
    MultiFunction,
    NameMismatch,
    UnparseableBefore,
    UnparseableAfter,
}

impl From<LocalizeFailure> for Rejection {
    fn from(f: LocalizeFailure) -> Self {
        match f {
            LocalizeFailure::NoChange => Rejection::NoChange,
            LocalizeFailure::OutsideFunction => Rejection::OutsideFunction,
            LocalizeFailure::MultiFunction => Rejection::MultiFunction,
            LocalizeFailure::NameMismatch => Rejection::NameMismatch,
            LocalizeFailure::UnparseableBefore => Rejection::UnparseableBefore,
            LocalizeFailure::UnparseableAfter => Rejection::UnparseableAfter,
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone)]
pub struct MinerConfig {
    /// Lowercase extensions without the dot.
    pub extensions: Vec<String>,
    pub max_file_bytes: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            extensions: DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            max_file_bytes: MAX_FILE_BYTES,
        }
    }
}

impl MinerConfig {
    pub fn accepts(&self, path: &str) -> bool {
        Path::new(path)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub commits: Vec<CommitMeta>,
    /// Hashes of commits that could not be read and were skipped.
    pub corrupt: Vec<String>,
    pub merges_skipped: usize,
}

/// Counts for the revert detector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevertScan {
    pub links: Vec<RevertLink>,
    /// Keyword present but the referenced prefix matched several commits.
    pub ambiguous: usize,
    /// Keyword and hex run present but nothing resolved.
    pub unresolved: usize,
    /// Keyword present without any hash-like run.
    pub no_reference: usize,
    /// Resolved target is not strictly older than the revert.
    pub not_earlier: usize,
}

/// Tally over single-parent commits: `rejections` plus `candidates` sums to
/// the number of scanned commits that are not merges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningTally {
    pub scanned: usize,
    pub candidates: usize,
    pub rejections: BTreeMap<Rejection, usize>,
}

impl MiningTally {
    pub fn record(&mut self, outcome: &Result<FunctionModification, Rejection>) {
        self.scanned += 1;
        match outcome {
            Ok(_) => self.candidates += 1,
            Err(r) => *self.rejections.entry(*r).or_default() += 1,
        }
    }

    pub fn rejected(&self) -> usize {
        self.rejections.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectiveCandidate {
    pub link: RevertLink,
    pub target_time: i64,
    pub modification: FunctionModification,
}

impl DefectiveCandidate {
    pub fn into_candidate(self, project: &str) -> Candidate {
        Candidate {
            project: project.to_string(),
            kind: Label::Defective,
            commit_time: self.target_time,
            modification: self.modification,
            revert: Some(self.link),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectiveReport {
    pub candidates: Vec<DefectiveCandidate>,
    pub reverts: RevertScan,
    /// Links dropped because another revert of the same target came first.
    pub duplicate_links: usize,
    /// Links whose target failed the single-function filter, by reason.
    pub target_rejections: BTreeMap<Rejection, usize>,
    pub corrupt: Vec<String>,
}

/// Hex runs of at least 7 characters that stand alone as words.
fn hex_runs(message: &str) -> Vec<String> {
    let bytes = message.as_bytes();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        let word = &message[start..i];
        if (MIN_ABBREV..=FULL_HASH).contains(&word.len())
            && word.bytes().all(|b| b.is_ascii_hexdigit())
        {
            runs.push(word.to_ascii_lowercase());
        }
    }
    runs
}

pub fn mentions_revert(message: &str) -> bool {
    message.to_ascii_lowercase().contains("revert")
}

/// Finds revert anchors among `commits`.
///
/// A link needs the keyword `revert` (any case) and a referenced hash. The
/// first hex run that matches any known commit decides: a unique match
/// strictly older than the revert becomes a link, several matches count as
/// ambiguous.
pub fn detect_reverts(commits: &[CommitMeta]) -> RevertScan {
    let mut hashes: Vec<&str> = commits.iter().map(|c| c.hash.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    let by_hash: HashMap<&str, &CommitMeta> =
        commits.iter().map(|c| (c.hash.as_str(), c)).collect();

    let mut scan = RevertScan::default();
    for c in commits {
        if !mentions_revert(&c.message) {
            continue;
        }
        let runs = hex_runs(&c.message);
        if runs.is_empty() {
            scan.no_reference += 1;
            continue;
        }
        let mut decided = false;
        for run in &runs {
            let lo = hashes.partition_point(|h| *h < run.as_str());
            let matches: Vec<&str> = hashes[lo..]
                .iter()
                .take_while(|h| h.starts_with(run.as_str()))
                .copied()
                .collect();
            match matches.len() {
                0 => continue,
                1 => {
                    let target = by_hash[matches[0]];
                    if target.hash == c.hash || target.commit_time >= c.commit_time {
                        scan.not_earlier += 1;
                    } else {
                        scan.links.push(RevertLink {
                            revert_hash: c.hash.clone(),
                            target_hash: target.hash.clone(),
                            revert_message: c.message.clone(),
                            match_kind: if run.len() == FULL_HASH {
                                MatchKind::FullHash
                            } else {
                                MatchKind::AbbreviatedHash
                            },
                        });
                    }
                }
                _ => scan.ambiguous += 1,
            }
            decided = true;
            break;
        }
        if !decided {
            scan.unresolved += 1;
        }
    }
    scan
}

enum BlobRead {
    Missing,
    Skipped,
    Text(Vec<u8>),
}

/// Read access to one repository.
pub struct Miner {
    repo: Repository,
    repo_id: String,
    config: MinerConfig,
}

impl Miner {
    pub fn open(path: &Path, config: MinerConfig) -> Result<Self, MineError> {
        let repo = Repository::open(path).map_err(|e| match e.code() {
            ErrorCode::NotFound => MineError::NotARepository {
                path: path.display().to_string(),
            },
            _ => MineError::Git(e),
        })?;
        let root = repo.workdir().unwrap_or_else(|| repo.path());
        let repo_id = std::fs::canonicalize(root)
            .ok()
            .as_deref()
            .unwrap_or(root)
            .file_name()
            .map(|s| s.to_string_lossy().trim_end_matches(".git").to_string())
            .unwrap_or_else(|| "repo".to_string());
        Ok(Self {
            repo,
            repo_id,
            config,
        })
    }

    pub fn repo_id(&self) -> &str {
        &self.repo_id
    }

    pub fn with_repo_id(mut self, id: impl Into<String>) -> Self {
        self.repo_id = id.into();
        self
    }

    pub fn config(&self) -> &MinerConfig {
        &self.config
    }

    /// Every non-merge commit reachable from a local branch (or HEAD), in
    /// commit-time order with ties broken by hash.
    pub fn scan_commits(&self, since: Option<i64>) -> Result<ScanOutput, MineError> {
        let mut out = ScanOutput::default();
        let mut walk = self.repo.revwalk()?;
        walk.set_sorting(Sort::NONE)?;
        let mut pushed = false;
        for r in self.repo.references()? {
            let r = r?;
            if r.is_branch() {
                if let Some(oid) = r.target() {
                    walk.push(oid)?;
                    pushed = true;
                }
            }
        }
        match self.repo.head() {
            Ok(h) => {
                if let Some(oid) = h.target() {
                    walk.push(oid)?;
                    pushed = true;
                }
            }
            Err(e) if matches!(e.code(), ErrorCode::UnbornBranch | ErrorCode::NotFound) => {}
            Err(e) => return Err(e.into()),
        }
        if !pushed {
            return Ok(out);
        }
        for oid in walk {
            let oid = match oid {
                Ok(o) => o,
                Err(e) => {
                    warn!("revwalk error: {e}");
                    out.corrupt.push(String::new());
                    continue;
                }
            };
            match self.commit_meta(oid) {
                Ok(Some(meta)) => {
                    if since.is_none_or(|s| meta.commit_time >= s) {
                        out.commits.push(meta);
                    }
                }
                Ok(None) => out.merges_skipped += 1,
                Err(e) => {
                    warn!("skipping unreadable commit {oid}: {e}");
                    out.corrupt.push(oid.to_string());
                }
            }
        }
        out.commits
            .sort_by(|a, b| (a.commit_time, &a.hash).cmp(&(b.commit_time, &b.hash)));
        Ok(out)
    }

    /// `None` for merge commits.
    fn commit_meta(&self, oid: Oid) -> Result<Option<CommitMeta>, git2::Error> {
        let commit = self.repo.find_commit(oid)?;
        if commit.parent_count() > 1 {
            return Ok(None);
        }
        let parents: Vec<String> = commit.parent_ids().map(|p| p.to_string()).collect();
        let touched_files = self.touched_files(&commit)?;
        let author_time = commit.author().when().seconds();
        Ok(Some(CommitMeta {
            repo_id: self.repo_id.clone(),
            hash: oid.to_string(),
            parent_hashes: parents,
            author_time,
            commit_time: commit.time().seconds(),
            message: String::from_utf8_lossy(commit.message_bytes()).into_owned(),
            touched_files,
        }))
    }

    fn touched_files(&self, commit: &Commit<'_>) -> Result<Vec<String>, git2::Error> {
        let tree = commit.tree()?;
        let parent_tree = match commit.parent_count() {
            0 => None,
            _ => Some(commit.parent(0)?.tree()?),
        };
        let mut opts = DiffOptions::new();
        opts.ignore_submodules(true);
        let diff = self
            .repo
            .diff_tree_to_tree(parent_tree.as_ref(), Some(&tree), Some(&mut opts))?;
        let mut files: Vec<String> = diff
            .deltas()
            .filter_map(|d| d.new_file().path().or_else(|| d.old_file().path()))
            .map(|p| p.to_string_lossy().into_owned())
            .collect();
        files.sort();
        files.dedup();
        Ok(files)
    }

    /// Blob bytes of `path` at `commit`, or `None` when the file is absent.
    /// Binary and oversized blobs are reported as `Err(BinaryOrLarge)`.
    pub fn file_at(&self, commit: &str, path: &str) -> Result<Option<Vec<u8>>, Rejection> {
        match self.read_blob(commit, path) {
            Ok(BlobRead::Missing) => Ok(None),
            Ok(BlobRead::Skipped) => Err(Rejection::BinaryOrLarge),
            Ok(BlobRead::Text(bytes)) => Ok(Some(bytes)),
            Err(e) => {
                debug!("reading {path} at {commit}: {e}");
                Ok(None)
            }
        }
    }

    fn read_blob(&self, commit: &str, path: &str) -> Result<BlobRead, git2::Error> {
        let commit = self.repo.find_commit(Oid::from_str(commit)?)?;
        let tree = commit.tree()?;
        let entry = match tree.get_path(Path::new(path)) {
            Ok(e) => e,
            Err(e) if e.code() == ErrorCode::NotFound => return Ok(BlobRead::Missing),
            Err(e) => return Err(e),
        };
        if entry.kind() != Some(ObjectType::Blob) {
            return Ok(BlobRead::Missing);
        }
        let blob = self.repo.find_blob(entry.id())?;
        if blob.is_binary() || blob.size() > self.config.max_file_bytes {
            return Ok(BlobRead::Skipped);
        }
        Ok(BlobRead::Text(blob.content().to_vec()))
    }

    /// The commit's change as a single-function modification, or why not.
    pub fn filter_single_function(
        &self,
        commit: &CommitMeta,
    ) -> Result<FunctionModification, Rejection> {
        let [parent] = commit.parent_hashes.as_slice() else {
            return Err(Rejection::RootCommit);
        };
        let [file] = commit.touched_files.as_slice() else {
            return Err(Rejection::FileCount);
        };
        if !self.config.accepts(file) {
            return Err(Rejection::ExtensionGate);
        }
        let before = self.file_at(parent, file)?;
        let after = self.file_at(&commit.hash, file)?;
        let (Some(before), Some(after)) = (before, after) else {
            return Err(Rejection::FileAddedOrDeleted);
        };
        let (before, lossy_b) = decode_source(&before);
        let (after, lossy_a) = decode_source(&after);
        if lossy_b || lossy_a {
            debug!("{}: {file} has invalid UTF-8, decoded lossily", commit.hash);
        }
        let diff = diff_lines(&before, &after);
        let change = localize(&before, &after, &diff)?;
        Ok(change.into_modification(commit.hash.clone(), file.clone(), commit.message.clone()))
    }

    /// Revert-anchored defective candidates, sorted by target commit time.
    pub fn collect_defective_candidates(
        &self,
        since: Option<i64>,
    ) -> Result<DefectiveReport, MineError> {
        let scan = self.scan_commits(since)?;
        Ok(defective_from_scan(self, &scan))
    }
}

/// Shared by [`Miner::collect_defective_candidates`] and the clean screener,
/// which both need the revert links of one scan.
pub fn defective_from_scan(miner: &Miner, scan: &ScanOutput) -> DefectiveReport {
    let reverts = detect_reverts(&scan.commits);
    let by_hash: HashMap<&str, &CommitMeta> =
        scan.commits.iter().map(|c| (c.hash.as_str(), c)).collect();

    // earliest revert per target wins
    let mut first: BTreeMap<&str, &RevertLink> = BTreeMap::new();
    let mut duplicate_links = 0;
    for link in &reverts.links {
        let revert_key = |l: &RevertLink| {
            let c = by_hash[l.revert_hash.as_str()];
            (c.commit_time, c.hash.clone())
        };
        match first.get(link.target_hash.as_str()) {
            Some(prev) if revert_key(prev) <= revert_key(link) => duplicate_links += 1,
            Some(_) => {
                duplicate_links += 1;
                first.insert(&link.target_hash, link);
            }
            None => {
                first.insert(&link.target_hash, link);
            }
        }
    }

    let mut report = DefectiveReport {
        duplicate_links,
        corrupt: scan.corrupt.clone(),
        ..Default::default()
    };
    for (target, link) in first {
        let meta = by_hash[target];
        match miner.filter_single_function(meta) {
            Ok(modification) => report.candidates.push(DefectiveCandidate {
                link: link.clone(),
                target_time: meta.commit_time,
                modification,
            }),
            Err(r) => *report.target_rejections.entry(r).or_default() += 1,
        }
    }
    report.candidates.sort_by(|a, b| {
        (a.target_time, &a.link.target_hash).cmp(&(b.target_time, &b.link.target_hash))
    });
    report.reverts = reverts;
    report
}
