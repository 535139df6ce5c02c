use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    aggregate, bundle_for, parse_category, prompt_version, EvidenceBundle, TriageError,
    TriageVerdict, TriageVote, VoteCache, VoteRequest, Voter, VoterError, VOTES_PER_CANDIDATE,
};
use crate::types::Candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriageConfig {
    /// Retries after a transient service error, per vote.
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    /// Extra asks after an unparseable answer, per vote.
    pub max_reasks: u32,
    pub concurrency: usize,
    /// 0 disables the limiter.
    pub requests_per_minute: u32,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_backoff_ms: 500,
            max_reasks: 2,
            concurrency: 4,
            requests_per_minute: 0,
        }
    }
}

/// Spaces request starts evenly; shared by all workers.
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(n: u32) -> Self {
        Self {
            interval: (n > 0).then(|| Duration::from_secs(60) / n),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parked {
    pub candidate_id: String,
    pub commit_hash: String,
    pub reason: String,
}

/// Asks for the three votes of one bundle, reusing cached votes. Transient
/// errors are retried with exponential backoff, unparseable answers are
/// re-asked; when either budget runs out the candidate is parked.
pub fn request_votes(
    voter: &dyn Voter,
    bundle: &EvidenceBundle,
    cache: Option<&VoteCache>,
    cfg: &TriageConfig,
    limiter: &RateLimiter,
) -> Result<Vec<TriageVote>, String> {
    let pv = prompt_version(bundle.kind);
    let prompt = bundle.prompt();
    let mut votes = Vec::with_capacity(VOTES_PER_CANDIDATE);
    for vote_index in 1..=VOTES_PER_CANDIDATE as u8 {
        if let Some(v) = cache.and_then(|c| c.get(&bundle.candidate_id, &pv, vote_index)) {
            votes.push(v);
            continue;
        }
        let vote = ask_one(voter, bundle, &prompt, vote_index, cfg, limiter)?;
        if let Some(c) = cache {
            if let Err(e) = c.put(&bundle.candidate_id, &pv, &vote) {
                log::warn!("could not cache vote for {}: {e}", bundle.candidate_id);
            }
        }
        votes.push(vote);
    }
    Ok(votes)
}

fn ask_one(
    voter: &dyn Voter,
    bundle: &EvidenceBundle,
    prompt: &str,
    vote_index: u8,
    cfg: &TriageConfig,
    limiter: &RateLimiter,
) -> Result<TriageVote, String> {
    let mut retries = 0;
    let mut attempt = 0;
    loop {
        limiter.acquire();
        let request = VoteRequest {
            bundle,
            prompt,
            vote_index,
            attempt,
        };
        match voter.complete(&request) {
            Ok(text) => match parse_category(&text) {
                Some(category) => {
                    return Ok(TriageVote {
                        category,
                        vote_index,
                        raw_response: text,
                        model_id: voter.model_id().to_string(),
                    })
                }
                None if attempt < cfg.max_reasks => attempt += 1,
                None => {
                    return Err(format!(
                        "vote {vote_index}: no category after {} asks",
                        attempt + 1
                    ))
                }
            },
            Err(VoterError::Transient(msg)) if retries < cfg.max_retries => {
                let backoff = cfg.base_backoff_ms.saturating_mul(1 << retries.min(16));
                log::debug!("vote {vote_index}: {msg}; retrying in {backoff} ms");
                thread::sleep(Duration::from_millis(backoff));
                retries += 1;
            }
            Err(e) => return Err(format!("vote {vote_index}: {e}")),
        }
    }
}

#[derive(Debug, Default)]
pub struct TriageOutcome {
    /// In input order.
    pub verdicts: Vec<(Candidate, TriageVerdict)>,
    pub parked: Vec<Parked>,
}

/// Triages every candidate with at most `cfg.concurrency` requests in flight.
/// The result does not depend on scheduling.
pub fn triage_all(
    candidates: &[Candidate],
    voter: &dyn Voter,
    cache: Option<&VoteCache>,
    cfg: &TriageConfig,
) -> Result<TriageOutcome, TriageError> {
    let bundles = candidates
        .iter()
        .map(bundle_for)
        .collect::<Result<Vec<_>, _>>()?;
    let limiter = RateLimiter::per_minute(cfg.requests_per_minute);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<TriageVote>, String>>>> =
        bundles.iter().map(|_| Mutex::new(None)).collect();
    let workers = cfg.concurrency.max(1).min(bundles.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= bundles.len() {
                    break;
                }
                let r = request_votes(voter, &bundles[i], cache, cfg, &limiter);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(r);
            });
        }
    });

    let mut outcome = TriageOutcome::default();
    for ((cand, bundle), slot) in candidates.iter().zip(&bundles).zip(slots) {
        match slot.into_inner().unwrap_or_else(|p| p.into_inner()) {
            Some(Ok(votes)) => {
                let verdict = aggregate(&bundle.candidate_id, votes, cand.kind)?;
                outcome.verdicts.push((cand.clone(), verdict));
            }
            Some(Err(reason)) => outcome.parked.push(Parked {
                candidate_id: bundle.candidate_id.clone(),
                commit_hash: cand.modification.commit_hash.clone(),
                reason,
            }),
            None => unreachable!("every slot is filled before the scope ends"),
        }
    }
    Ok(outcome)
}
