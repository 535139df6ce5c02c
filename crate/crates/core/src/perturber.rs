//! Seeded counterfactual perturbations of encoded changes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::DatasetSample;
use crate::encoder::{EncodeError, EncodedInput, Encoder, Encoding, PerturbationStamp, ADD, DEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    SpuriousMarkers,
    SwappedSnapshots,
    ReversedDiffTags,
    SwappedBlocks,
}

/// When a perturbation is allowed to touch outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Applicability {
    TrainAndTest,
    TestOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::SpuriousMarkers,
        PerturbationKind::SwappedSnapshots,
        PerturbationKind::ReversedDiffTags,
        PerturbationKind::SwappedBlocks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::SpuriousMarkers => "spurious-markers",
            PerturbationKind::SwappedSnapshots => "swapped-snapshots",
            PerturbationKind::ReversedDiffTags => "reversed-diff-tags",
            PerturbationKind::SwappedBlocks => "swapped-blocks",
        }
    }

    pub fn applicability(self) -> Applicability {
        match self {
            PerturbationKind::SpuriousMarkers | PerturbationKind::SwappedBlocks => {
                Applicability::TrainAndTest
            }
            PerturbationKind::SwappedSnapshots | PerturbationKind::ReversedDiffTags => {
                Applicability::TestOnly
            }
        }
    }

    /// The unperturbed encoding this perturbation distorts.
    pub fn base_encoding(self) -> Encoding {
        match self {
            PerturbationKind::SpuriousMarkers => Encoding::AfterMarkers,
            PerturbationKind::SwappedSnapshots => Encoding::BeforeAfter,
            PerturbationKind::ReversedDiffTags => Encoding::DiffTags,
            PerturbationKind::SwappedBlocks => Encoding::AddedDeleted,
        }
    }

    pub fn default_probability(self) -> f64 {
        match self {
            PerturbationKind::SwappedSnapshots | PerturbationKind::SwappedBlocks => 0.5,
            _ => 1.0,
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || format!("{k:?}").to_ascii_lowercase() == norm)
            .ok_or_else(|| {
                format!(
                    "unknown perturbation `{s}` (expected one of {})",
                    PerturbationKind::ALL.map(|k| k.name()).join(", ")
                )
            })
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Phase::Train),
            "test" => Ok(Phase::Test),
            _ => Err(format!("unknown phase `{s}` (expected train or test)")),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub kind: PerturbationKind,
    pub probability: f64,
    pub applicability: Applicability,
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        Self {
            kind,
            probability: kind.default_probability(),
            applicability: kind.applicability(),
            seed,
        }
    }

    /// Overrides the firing probability of the two swaps.
    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = p.clamp(0.0, 1.0);
        self
    }

    pub fn active_in(&self, phase: Phase) -> bool {
        phase == Phase::Test || self.applicability == Applicability::TrainAndTest
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("expected a diff-tags encoding, got {0}")]
    NotDiffTags(Encoding),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Per-sample generator keyed by (seed, sample id), so corpus order has no
/// effect on outcomes.
pub fn sample_rng(seed: u64, sample_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn fires(rng: &mut ChaCha8Rng, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random_bool(p)
    }
}

/// Removes the true markers and tags `|added_lines_local|` uniformly chosen
/// lines instead. Extra tags beyond the line count are appended.
pub fn spurious_markers(enc: &Encoder, sample: &DatasetSample, seed: u64) -> EncodedInput {
    let m = sample.added_lines_local.len();
    let n = sample.function_after.lines().count();
    let positions: Vec<usize> = if m >= n {
        (1..=m).collect()
    } else {
        let mut rng = sample_rng(seed, &sample.id);
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, n, m)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        picked.sort_unstable();
        picked
    };
    let mut out = enc.after_markers(&DatasetSample {
        added_lines_local: positions,
        ..sample.clone()
    });
    out.sample_id = sample.id.clone();
    out
}

/// The sample with its two snapshots and line sets exchanged.
pub fn swapped_sample(sample: &DatasetSample) -> DatasetSample {
    DatasetSample {
        function_before: sample.function_after.clone(),
        function_after: sample.function_before.clone(),
        deleted_lines_local: sample.added_lines_local.clone(),
        added_lines_local: sample.deleted_lines_local.clone(),
        ..sample.clone()
    }
}

pub fn swap_snapshots(enc: &Encoder, sample: &DatasetSample, cfg: &PerturbationConfig) -> (EncodedInput, bool) {
    let swap = fires(&mut sample_rng(cfg.seed, &sample.id), cfg.probability);
    let out = if swap {
        enc.before_after_from(&sample.id, &sample.function_after, &sample.function_before)
    } else {
        enc.before_after(sample)
    };
    (out, swap)
}

/// Exchanges `<ADD>` and `<DEL>`; every other token is untouched.
pub fn reverse_diff_tags(input: &EncodedInput) -> Result<EncodedInput, PerturbError> {
    if input.encoding != Encoding::DiffTags {
        return Err(PerturbError::NotDiffTags(input.encoding));
    }
    let tokens = input
        .tokens
        .iter()
        .map(|t| match t.as_str() {
            ADD => DEL.to_string(),
            DEL => ADD.to_string(),
            _ => t.clone(),
        })
        .collect();
    Ok(EncodedInput {
        tokens,
        ..input.clone()
    })
}

pub fn swap_blocks(enc: &Encoder, sample: &DatasetSample, cfg: &PerturbationConfig) -> (EncodedInput, bool) {
    let swap = fires(&mut sample_rng(cfg.seed, &sample.id), cfg.probability);
    let (added, deleted) = enc.change_blocks(sample);
    let out = if swap {
        enc.added_deleted_from(&sample.id, deleted, added)
    } else {
        enc.added_deleted_from(&sample.id, added, deleted)
    };
    (out, swap)
}

/// Encodes `sample` for `phase`. Outside its phase a perturbation is not
/// applied and the unperturbed base encoding is returned; either way the
/// output carries a stamp saying what happened.
pub fn perturb(
    enc: &Encoder,
    sample: &DatasetSample,
    cfg: &PerturbationConfig,
    phase: Phase,
) -> Result<EncodedInput, PerturbError> {
    let mut out;
    let applied;
    if !cfg.active_in(phase) {
        out = enc.encode(sample, cfg.kind.base_encoding())?;
        applied = false;
    } else {
        // same precondition as the base encodings
        enc.encode(sample, Encoding::AfterOnly)?;
        (out, applied) = match cfg.kind {
            PerturbationKind::SpuriousMarkers => (spurious_markers(enc, sample, cfg.seed), true),
            PerturbationKind::SwappedSnapshots => swap_snapshots(enc, sample, cfg),
            PerturbationKind::ReversedDiffTags => (reverse_diff_tags(&enc.diff_tags(sample))?, true),
            PerturbationKind::SwappedBlocks => swap_blocks(enc, sample, cfg),
        };
    }
    out.perturbation = Some(PerturbationStamp {
        kind: cfg.kind.name().to_string(),
        phase: phase.to_string(),
        seed: cfg.seed,
        applied,
    });
    Ok(out)
}
