use std::fmt;

use jitcorpus::dataset::DatasetError;
use jitcorpus::encoder::{EncodeError, TokenizerError};
use jitcorpus::miner::MineError;
use jitcorpus::perturber::PerturbError;
use jitcorpus::records::RecordError;
use jitcorpus::stats::StatsError;
use jitcorpus::triage::TriageError;

/// Error category; each maps to one exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    External(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::External(_) => 4,
            CliError::Data(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Io(m) => ("io", m),
            CliError::External(m) => ("external-service", m),
            CliError::Data(m) => ("data", m),
        };
        write!(f, "{kind} error: {msg}")
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io { .. } => CliError::Io(e.to_string()),
            RecordError::ConfigMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Records(r) => r.into(),
            DatasetError::BadRatios(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MineError> for CliError {
    fn from(e: MineError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(EncodeError, PerturbError, StatsError, TriageError);
