//! Anomaly scoring and threshold calibration.
//!
//! The score of a record is its negative log likelihood under the trained
//! mixture, so lower modeled density means a higher score. Calibration
//! turns a batch of scores from normal-looking data into a cutoff; records
//! scoring strictly above the cutoff are flagged. A score exactly equal to
//! the threshold is not flagged.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::model::{forward, log_density, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Nearest-rank quantile of the calibration scores.
    Quantile(f64),
    /// Calibration mean plus k population standard deviations.
    MeanPlusKSigma(f64),
    /// A fixed, externally chosen cutoff.
    Fixed(f64),
}

pub const DEFAULT_QUANTILE: f64 = 0.99;
pub const DEFAULT_K_SIGMA: f64 = 3.0;

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Quantile(DEFAULT_QUANTILE)
    }
}

impl core::str::FromStr for ThresholdPolicy {
    type Err = Error;

    /// Accepts `quantile[:q]`, `mean_plus_k_sigma[:k]`, `fixed:value`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: alloc::string::String| Error::InvalidArgument {
            op: "ThresholdPolicy::from_str",
            reason,
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let parse = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| bad(format!("unparsable policy parameter `{a}`")))
        };
        match kind {
            "quantile" => Ok(ThresholdPolicy::Quantile(match arg {
                Some(a) => parse(a)?,
                None => DEFAULT_QUANTILE,
            })),
            "mean_plus_k_sigma" => Ok(ThresholdPolicy::MeanPlusKSigma(match arg {
                Some(a) => parse(a)?,
                None => DEFAULT_K_SIGMA,
            })),
            "fixed" => match arg {
                Some(a) => Ok(ThresholdPolicy::Fixed(parse(a)?)),
                None => Err(bad("fixed policy needs a value, e.g. fixed:7.5".into())),
            },
            other => Err(bad(format!(
                "unknown policy `{other}` (valid: quantile, mean_plus_k_sigma, fixed)"
            ))),
        }
    }
}

/// Summary of the calibration scores embedded in reports: their mean,
/// population std, and nearest-rank quantile value (at the policy's q for
/// quantile policies, at the default q otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationStats {
    pub mean: f64,
    pub std: f64,
    pub quantile: f64,
    pub quantile_value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub flags: Vec<bool>,
    pub calibration: CalibrationStats,
}

/// Negative log likelihood of each record's target under the model.
pub fn anomaly_score(
    params: &NetworkParams,
    features: &Matrix,
    targets: &[f64],
) -> Result<Vec<f64>> {
    let (out, _) = forward(params, features)?;
    let ld = log_density(&out, targets)?;
    Ok(ld.into_iter().map(|v| -v).collect())
}

fn check_scores(op: &'static str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput { op });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            op,
            what: "calibration score".into(),
        });
    }
    Ok(())
}

/// Nearest-rank quantile: the ceil(q*n)-th smallest score.
fn nearest_rank_quantile(scores: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument {
            op: "calibrate_threshold",
            reason: format!("quantile must be in (0, 1), got {q}"),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (math::ceil(q * sorted.len() as f64) as usize).max(1);
    Ok(sorted[rank - 1])
}

pub fn calibrate_threshold(calibration_scores: &[f64], policy: &ThresholdPolicy) -> Result<f64> {
    match policy {
        ThresholdPolicy::Fixed(value) => {
            if value.is_nan() {
                return Err(Error::NonFinite {
                    op: "calibrate_threshold",
                    what: "fixed threshold".into(),
                });
            }
            Ok(*value)
        }
        ThresholdPolicy::Quantile(q) => {
            check_scores("calibrate_threshold", calibration_scores)?;
            nearest_rank_quantile(calibration_scores, *q)
        }
        ThresholdPolicy::MeanPlusKSigma(k) => {
            check_scores("calibrate_threshold", calibration_scores)?;
            let n = calibration_scores.len() as f64;
            let mean = calibration_scores.iter().sum::<f64>() / n;
            let var = calibration_scores
                .iter()
                .map(|s| (s - mean) * (s - mean))
                .sum::<f64>()
                / n;
            Ok(mean + k * math::sqrt(var))
        }
    }
}

/// Flag iff score > threshold; ties stay normal.
pub fn classify(scores: &[f64], threshold: f64) -> Result<Vec<bool>> {
    if threshold.is_nan() {
        return Err(Error::NonFinite {
            op: "classify",
            what: "threshold".into(),
        });
    }
    Ok(scores.iter().map(|&s| s > threshold).collect())
}

/// Calibrate on one batch of scores, classify another, and bundle the
/// result with the calibration summary.
pub fn anomaly_report(
    calibration_scores: &[f64],
    policy: &ThresholdPolicy,
    scores: &[f64],
) -> Result<AnomalyReport> {
    let threshold = calibrate_threshold(calibration_scores, policy)?;
    let flags = classify(scores, threshold)?;
    let calibration = if calibration_scores.is_empty() {
        // Only reachable with a fixed policy.
        CalibrationStats {
            mean: f64::NAN,
            std: f64::NAN,
            quantile: DEFAULT_QUANTILE,
            quantile_value: f64::NAN,
            count: 0,
        }
    } else {
        let n = calibration_scores.len() as f64;
        let mean = calibration_scores.iter().sum::<f64>() / n;
        let var = calibration_scores
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / n;
        let q = match policy {
            ThresholdPolicy::Quantile(q) => *q,
            _ => DEFAULT_QUANTILE,
        };
        CalibrationStats {
            mean,
            std: math::sqrt(var),
            quantile: q,
            quantile_value: nearest_rank_quantile(calibration_scores, q)?,
            count: calibration_scores.len(),
        }
    };
    Ok(AnomalyReport {
        scores: scores.to_vec(),
        threshold,
        flags,
        calibration,
    })
}
