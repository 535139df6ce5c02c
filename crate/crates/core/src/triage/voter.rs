use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::EvidenceBundle;
use crate::types::Label;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VoterError {
    /// Worth retrying: timeouts, 429, 5xx, connection resets.
    #[error("transient service error: {0}")]
    Transient(String),
    #[error("service error: {0}")]
    Fatal(String),
}

pub struct VoteRequest<'a> {
    pub bundle: &'a EvidenceBundle,
    pub prompt: &'a str,
    /// 1-based.
    pub vote_index: u8,
    /// 0 for the first ask, incremented on each re-ask after an
    /// unparseable answer.
    pub attempt: u32,
}

/// Something that answers one rubric prompt. Each call is an independent
/// request with no shared conversation state.
pub trait Voter: Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &VoteRequest<'_>) -> Result<String, VoterError>;
}

/// Chat-completion style HTTPS endpoint.
pub struct HttpVoter {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
}

impl HttpVoter {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        temperature: Option<f64>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            temperature,
        }
    }
}

impl Voter for HttpVoter {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &VoteRequest<'_>) -> Result<String, VoterError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::BadUri(_) | ureq::Error::Http(_) => VoterError::Fatal(e.to_string()),
            other => VoterError::Transient(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(VoterError::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(VoterError::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| VoterError::Transient(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| VoterError::Fatal(format!("no message content in response: {value}")))
    }
}

/// Deterministic keyword voter for tests and air-gapped runs. Every vote for
/// a bundle is the same, so its verdicts are always unanimous.
pub struct StubVoter;

pub const STUB_MODEL_ID: &str = "offline-stub/keyword-v1";

const DEFECT_WORDS: &[&str] = &[
    "crash", "bug", "fail", "regress", "break", "broke", "leak", "overflow", "wrong", "incorrect",
    "deadlock", "race", "corrupt", "hang",
];
const FIX_WORDS: &[&str] = &["fix", "repair", "correct", "resolve"];
const CHANGE_WORDS: &[&str] = &[
    "add", "improve", "optimi", "refactor", "feature", "simplify", "tune", "speed", "clean",
    "support", "update", "rework", "document",
];

fn any_word(text: &str, words: &[&str]) -> bool {
    let lower = text.to_lowercase();
    words.iter().any(|w| lower.contains(w))
}

impl StubVoter {
    pub fn classify(bundle: &EvidenceBundle) -> char {
        match bundle.kind {
            Label::Defective => {
                let reverted = bundle.reverted_commit_message.as_deref().unwrap_or("");
                let revert = bundle.revert_commit_message.as_deref().unwrap_or("");
                if !any_word(&format!("{reverted}\n{revert}"), DEFECT_WORDS) {
                    'C'
                } else if any_word(reverted, FIX_WORDS) {
                    'A'
                } else {
                    'B'
                }
            }
            Label::Clean => {
                let msg = bundle.commit_message.as_deref().unwrap_or("");
                if any_word(msg, FIX_WORDS) || any_word(msg, &["bug"]) {
                    'A'
                } else if any_word(msg, CHANGE_WORDS) {
                    'B'
                } else {
                    'C'
                }
            }
        }
    }
}

impl Voter for StubVoter {
    fn model_id(&self) -> &str {
        STUB_MODEL_ID
    }

    fn complete(&self, request: &VoteRequest<'_>) -> Result<String, VoterError> {
        Ok(format!("offline keyword heuristic\n{}", Self::classify(request.bundle)))
    }
}
