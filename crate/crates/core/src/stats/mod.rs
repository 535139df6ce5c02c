//! Classification metrics and the repeated-measures / paired-test protocol.

mod anova;
mod metrics;
mod paired;
mod report;

use thiserror::Error;

pub use anova::{cohens_f, f_sf, partial_eta_sq, rm_anova, AnovaEffect, ScoreMatrix};
pub use metrics::{metrics, pr_auc, Confusion, Metrics, Rate};
pub use paired::{
    bootstrap_mean_ci, holm, midranks, paired_tests, quantile, wilcoxon_signed_rank, PairedTestResult,
    WilcoxonResult, DEFAULT_RESAMPLES, WILCOXON_EXACT_MAX,
};
pub use report::{
    percent_change, prediction_report, stage1_report, stage2_pairs, stage2_report, CellSummary,
    PredictionRecord, PredictionReport, ScoreRecord, Stage1Report, Stage2Report, Stage2Row,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("label at index {index} is {value}, expected 0 or 1")]
    NonBinaryLabel { index: usize, value: i64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("at least one positive label is required")]
    NoPositives,
    #[error("p-value {0} is outside [0, 1]")]
    PValueOutOfRange(f64),
    #[error("need at least 2 paired observations, got {0}")]
    TooFewPairs(usize),
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("each factor needs at least 2 levels")]
    TooFewLevels,
    #[error("missing cell (subject {subject}, model {model}, encoding {encoding})")]
    MissingCell { subject: usize, model: usize, encoding: usize },
    #[error("no score for model {model}, encoding {encoding}, seed {seed}")]
    MissingScore { model: String, encoding: String, seed: u64 },
    #[error("duplicate score for model {model}, encoding {encoding}, seed {seed}")]
    DuplicateScore { model: String, encoding: String, seed: u64 },
    #[error("no scores for {0}")]
    NoScores(String),
    #[error("{orig} and {pert} were not scored on the same seeds")]
    SeedMismatch { orig: String, pert: String },
}
