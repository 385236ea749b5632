//! Evaluation metrics with the anomalous class as the positive class:
//! confusion counts, accuracy, precision, recall, F1, and ROC-AUC computed
//! from tie-aware rank statistics.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

/// A metric value plus a marker for the degenerate convention: when the
/// defining ratio is 0/0 the value is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub degenerate: bool,
}

impl MetricValue {
    fn defined(value: f64) -> Self {
        MetricValue {
            value,
            degenerate: false,
        }
    }

    fn degenerate_zero() -> Self {
        MetricValue {
            value: 0.0,
            degenerate: true,
        }
    }
}

pub fn confusion(flags: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    if flags.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "confusion",
            left: (flags.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if flags.is_empty() {
        return Err(Error::EmptyInput { op: "confusion" });
    }
    let mut c = ConfusionCounts::default();
    for (&flag, &label) in flags.iter().zip(labels) {
        match (flag, label) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, false) => c.true_negatives += 1,
            (false, true) => c.false_negatives += 1,
        }
    }
    Ok(c)
}

fn check_counts(op: &'static str, c: &ConfusionCounts) -> Result<()> {
    if c.total() == 0 {
        return Err(Error::EmptyInput { op });
    }
    Ok(())
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    check_counts("accuracy", c)?;
    Ok((c.true_positives + c.true_negatives) as f64 / c.total() as f64)
}

pub fn precision(c: &ConfusionCounts) -> Result<MetricValue> {
    check_counts("precision", c)?;
    let denom = c.true_positives + c.false_positives;
    if denom == 0 {
        return Ok(MetricValue::degenerate_zero());
    }
    Ok(MetricValue::defined(c.true_positives as f64 / denom as f64))
}

pub fn recall(c: &ConfusionCounts) -> Result<MetricValue> {
    check_counts("recall", c)?;
    let denom = c.true_positives + c.false_negatives;
    if denom == 0 {
        return Ok(MetricValue::degenerate_zero());
    }
    Ok(MetricValue::defined(c.true_positives as f64 / denom as f64))
}

pub fn f1(c: &ConfusionCounts) -> Result<MetricValue> {
    let p = precision(c)?;
    let r = recall(c)?;
    if p.degenerate || r.degenerate || p.value + r.value == 0.0 {
        return Ok(MetricValue::degenerate_zero());
    }
    Ok(MetricValue::defined(
        2.0 * p.value * r.value / (p.value + r.value),
    ))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half: the Mann-Whitney statistic over average ranks,
/// O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "roc_auc",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            op: "roc_auc",
            what: "score".into(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks over tie groups, 1-based.
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                positive_rank_sum += avg_rank;
            }
        }
        i = j;
    }
    let u = positive_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Full metric set for a scored, labeled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub f1: MetricValue,
    pub auc: f64,
    pub counts: ConfusionCounts,
    pub loss_variance: Option<f64>,
}

pub fn metrics_report(
    scores: &[f64],
    flags: &[bool],
    labels: &[bool],
    loss_variance: Option<f64>,
) -> Result<MetricsReport> {
    let counts = confusion(flags, labels)?;
    Ok(MetricsReport {
        accuracy: accuracy(&counts)?,
        precision: precision(&counts)?,
        recall: recall(&counts)?,
        f1: f1(&counts)?,
        auc: roc_auc(scores, labels)?,
        counts,
        loss_variance,
    })
}
