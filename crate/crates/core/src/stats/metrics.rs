use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn check_labels(labels: &[u8]) -> Result<(), StatsError> {
    match labels.iter().position(|l| *l > 1) {
        Some(i) => Err(StatsError::NonBinaryLabel {
            index: i,
            value: labels[i] as i64,
        }),
        None => Ok(()),
    }
}

impl Confusion {
    pub fn from_labels(predicted: &[u8], labels: &[u8]) -> Result<Self, StatsError> {
        if predicted.len() != labels.len() {
            return Err(StatsError::LengthMismatch(predicted.len(), labels.len()));
        }
        if labels.is_empty() {
            return Err(StatsError::Empty);
        }
        check_labels(labels)?;
        check_labels(predicted)?;
        let mut c = Confusion::default();
        for (p, y) in predicted.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Scores at or above `threshold` count as positive predictions.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self, StatsError> {
        let predicted: Vec<u8> = scores.iter().map(|s| u8::from(*s >= threshold)).collect();
        Self::from_labels(&predicted, labels)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// A ratio that is defined as 0 (and flagged) when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

fn rate(num: u64, den: u64) -> Rate {
    if den == 0 {
        Rate {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Rate {
            value: num as f64 / den as f64,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Rate,
    pub precision: Rate,
    pub recall: Rate,
    pub f1: Rate,
}

pub fn metrics(c: &Confusion) -> Metrics {
    let precision = rate(c.tp, c.tp + c.fp);
    let recall = rate(c.tp, c.tp + c.fn_);
    let sum = precision.value + recall.value;
    let f1 = if sum == 0.0 {
        Rate {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Rate {
            value: 2.0 * precision.value * recall.value / sum,
            degenerate: precision.degenerate || recall.degenerate,
        }
    };
    Metrics {
        accuracy: rate(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

/// Area under the precision-recall curve as average precision: the sum of
/// precision at each distinct score threshold weighted by the recall gained
/// there. Tied scores enter together.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch(scores.len(), labels.len()));
    }
    check_labels(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let positives = labels.iter().filter(|l| **l == 1).count();
    if positives == 0 {
        return Err(StatsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}
