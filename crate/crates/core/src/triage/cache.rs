use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::TriageVote;

/// One JSON file per (candidate, prompt version, vote). Writes go through a
/// temporary file and a rename so an interrupted run never leaves a torn entry.
#[derive(Debug, Clone)]
pub struct VoteCache {
    dir: PathBuf,
}

impl VoteCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, candidate_id: &str, prompt_version: &str, vote_index: u8) -> PathBuf {
        self.dir
            .join(format!("{candidate_id}.{prompt_version}.vote{vote_index}.json"))
    }

    /// A missing or unreadable entry counts as a miss.
    pub fn get(&self, candidate_id: &str, prompt_version: &str, vote_index: u8) -> Option<TriageVote> {
        let bytes = fs::read(self.path(candidate_id, prompt_version, vote_index)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, candidate_id: &str, prompt_version: &str, vote: &TriageVote) -> io::Result<()> {
        let final_path = self.path(candidate_id, prompt_version, vote.vote_index);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, vote)?;
        tmp.flush()?;
        tmp.persist(final_path).map_err(|e| e.error)?;
        Ok(())
    }
}
