use std::fs;
use std::path::{Path, PathBuf};

use jitcorpus::dataset::SplitRatios;
use jitcorpus::encoder::TokenizerSpec;
use jitcorpus::miner::{MinerConfig, DEFAULT_EXTENSIONS, MAX_FILE_BYTES};
use jitcorpus::records::short_hash;
use jitcorpus::screen::ScreenConfig;
use jitcorpus::stats::DEFAULT_RESAMPLES;
use jitcorpus::triage::TriageConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoEntry {
    pub path: PathBuf,
    /// Project name used in records; defaults to the directory name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerSection {
    pub extensions: Vec<String>,
    pub max_file_bytes: usize,
    pub since: Option<i64>,
}

impl Default for MinerSection {
    fn default() -> Self {
        Self {
            extensions: DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            max_file_bytes: MAX_FILE_BYTES,
            since: None,
        }
    }
}

impl MinerSection {
    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            extensions: self.extensions.iter().map(|e| e.trim_start_matches('.').to_ascii_lowercase()).collect(),
            max_file_bytes: self.max_file_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriageSection {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: Option<f64>,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    pub limits: TriageConfig,
}

impl Default for TriageSection {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "JITCORPUS_API_KEY".into(),
            temperature: None,
            timeout_secs: 120,
            cache_dir: None,
            limits: TriageConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSection {
    pub perturbation: u64,
    pub bootstrap: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self {
            perturbation: 20_240_601,
            bootstrap: 12_345,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub resamples: usize,
    pub greenhouse_geisser: bool,
    pub metric: String,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            greenhouse_geisser: false,
            metric: "f1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub repos: Vec<RepoEntry>,
    pub miner: MinerSection,
    pub screen: ScreenConfig,
    pub triage: TriageSection,
    pub tokenizer: TokenizerSpec,
    pub budgets: Vec<usize>,
    pub split: SplitRatios,
    pub seeds: SeedSection,
    pub stats: StatsSection,
    /// Base for relative output paths.
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            repos: Vec::new(),
            miner: MinerSection::default(),
            screen: ScreenConfig::default(),
            triage: TriageSection::default(),
            tokenizer: TokenizerSpec::default(),
            budgets: vec![512, 1024],
            split: SplitRatios::default(),
            seeds: SeedSection::default(),
            stats: StatsSection::default(),
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.screen.validate().map_err(|e| CliError::Config(format!("screen: {e}")))?;
        self.split.validate().map_err(|e| CliError::Config(format!("split: {e}")))?;
        if self.miner.extensions.is_empty() {
            return bad("miner.extensions must not be empty".into());
        }
        if self.tokenizer.budget == 0 || self.budgets.iter().any(|b| *b == 0) {
            return bad("token budgets must be positive".into());
        }
        if self.triage.limits.concurrency == 0 {
            return bad("triage.limits.concurrency must be at least 1".into());
        }
        if let Some(t) = self.triage.temperature {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("triage.temperature {t} is outside [0, 2]"));
            }
        }
        if self.stats.resamples == 0 {
            return bad("stats.resamples must be positive".into());
        }
        Ok(())
    }

    /// Hash of every setting that can change stage outputs.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        canon.triage.cache_dir = None;
        short_hash(serde_json::to_string(&canon).expect("config serializes").as_bytes())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}
