//! JSON report assembly. Reports carry raw fractions plus percentage
//! display strings, the resolved run configuration, and a format version.
//! serde_json's default map keeps keys sorted, so identical runs serialize
//! identically.

use mdn_core::metrics::MetricsReport;
use mdn_core::score::CalibrationStats;
use mdn_core::train::{OptimizerComparison, TrainReport};
use serde_json::{json, Map, Value};

pub const REPORT_FORMAT_VERSION: u32 = 1;

fn config_object(provenance: &[(String, String)]) -> Value {
    let mut map = Map::new();
    for (key, value) in provenance {
        map.insert(key.clone(), Value::String(value.clone()));
    }
    Value::Object(map)
}

fn pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

pub fn metrics_json(
    metrics: &MetricsReport,
    threshold: f64,
    threshold_policy: &str,
    calibration: &CalibrationStats,
    calibration_source: &str,
    provenance: &[(String, String)],
) -> Value {
    json!({
        "format_version": REPORT_FORMAT_VERSION,
        "config": config_object(provenance),
        "metrics": {
            "accuracy": metrics.accuracy,
            "precision": metrics.precision.value,
            "precision_degenerate": metrics.precision.degenerate,
            "recall": metrics.recall.value,
            "recall_degenerate": metrics.recall.degenerate,
            "f1": metrics.f1.value,
            "f1_degenerate": metrics.f1.degenerate,
            "auc": metrics.auc,
            "loss_variance": metrics.loss_variance,
            "display": {
                "acc_pct": pct(metrics.accuracy),
                "auc_pct": pct(metrics.auc),
                "f1_pct": pct(metrics.f1.value),
                "precision_pct": pct(metrics.precision.value),
                "recall_pct": pct(metrics.recall.value),
            },
        },
        "counts": {
            "true_positives": metrics.counts.true_positives,
            "false_positives": metrics.counts.false_positives,
            "true_negatives": metrics.counts.true_negatives,
            "false_negatives": metrics.counts.false_negatives,
        },
        "threshold": threshold,
        "threshold_policy": threshold_policy,
        "calibration": {
            "mean": calibration.mean,
            "std": calibration.std,
            "quantile": calibration.quantile,
            "quantile_value": calibration.quantile_value,
            "count": calibration.count,
            "source": calibration_source,
        },
    })
}

pub fn train_summary_json(
    report: &TrainReport,
    checkpoint_path: &str,
    curves_path: &str,
    provenance: &[(String, String)],
) -> Value {
    json!({
        "format_version": REPORT_FORMAT_VERSION,
        "config": config_object(provenance),
        "epochs_run": report.epochs_run,
        "final_train_loss": report.train_loss_curve.last(),
        "final_val_loss": report.val_loss_curve.last(),
        "loss_variance": report.loss_variance,
        "wall_clock_seconds": report.wall_clock_seconds,
        "checkpoint": checkpoint_path,
        "curves": curves_path,
    })
}

pub fn comparison_json(rows: &[OptimizerComparison], provenance: &[(String, String)]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "kind": r.kind.name(),
                "accuracy": r.accuracy,
                "f1": r.f1,
                "loss_variance": r.loss_variance,
                "final_train_loss": r.final_train_loss,
            })
        })
        .collect();
    json!({
        "format_version": REPORT_FORMAT_VERSION,
        "config": config_object(provenance),
        "rows": rows,
    })
}

pub fn truth_sidecar_json(
    noise_sigma: f64,
    anomaly_fraction: f64,
    shift: f64,
    true_log_density: &[f64],
    provenance: &[(String, String)],
) -> Value {
    json!({
        "format_version": REPORT_FORMAT_VERSION,
        "config": config_object(provenance),
        "generator": {
            "kind": "bimodal",
            "noise_sigma": noise_sigma,
            "anomaly_fraction": anomaly_fraction,
            "shift_sigmas": shift,
        },
        "true_log_density": true_log_density,
    })
}
