//! End-to-end exercises of the `mdn` binary: exit codes, file contracts,
//! and the fixture pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mdn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdn"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    mdn()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mdn")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1) // header
        .map(String::from)
        .collect()
}

#[test]
fn gen_synthetic_row_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen-synthetic",
        "--out",
        "a.csv",
        "--n",
        "1000",
        "--seed",
        "4",
        "--anomaly-fraction",
        "0.05",
    ];
    assert_success(&run_in(dir.path(), &args));
    let rows = data_rows(&dir.path().join("a.csv"));
    assert_eq!(rows.len(), 1000);
    let anomalous = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert_eq!(anomalous, 50);
    assert!(dir.path().join("a.csv.truth.json").is_file());

    let mut again = args;
    again[2] = "b.csv";
    assert_success(&run_in(dir.path(), &again));
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn gen_synthetic_rejects_out_of_range_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["gen-synthetic", "--out", "x.csv", "--anomaly-fraction", "0.9"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("anomaly-fraction"));
}

#[test]
fn train_missing_data_path_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["train", "--data", "nowhere.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn unknown_optimizer_kind_exits_2_listing_valid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y,label\n1,2,0\n2,3,0\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "compare-optimizers",
            "--data",
            "d.csv",
            "--kinds",
            "adam,turbo",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("turbo") && err.contains("adabelief"), "{err}");
}

/// The full pipeline on the bundled flow-records fixture: train, score,
/// evaluate, including checkpoint reuse and the degenerate fixed threshold.
#[test]
fn fixture_pipeline_train_score_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("flows_small.csv");
    let config = fixture("flows_small.conf");
    let data_s = data.to_str().unwrap();
    let config_s = config.to_str().unwrap();

    let out = run_in(
        dir.path(),
        &[
            "train",
            "--data",
            data_s,
            "--config",
            config_s,
            "--out-checkpoint",
            "m.ckpt",
            "--out-curves",
            "c.csv",
            "--out-summary",
            "s.json",
        ],
    );
    assert_success(&out);
    // Curve length equals the configured epoch count.
    assert_eq!(data_rows(&dir.path().join("c.csv")).len(), 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["epochs_run"], 8);
    assert_eq!(summary["config"]["optimizer"], "adamw");

    // Scoring emits one row per input record.
    let out = run_in(
        dir.path(),
        &[
            "score",
            "--data",
            data_s,
            "--checkpoint",
            "m.ckpt",
            "--out-scores",
            "scores.csv",
        ],
    );
    assert_success(&out);
    let scores = data_rows(&dir.path().join("scores.csv"));
    assert_eq!(scores.len(), 40);
    assert!(scores[0].starts_with("0,"));

    // Evaluation prints a metrics report.
    let out = run_in(
        dir.path(),
        &[
            "evaluate",
            "--data",
            data_s,
            "--checkpoint",
            "m.ckpt",
            "--out-report",
            "report.json",
        ],
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let auc = report["metrics"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["metrics"]["display"]["acc_pct"].is_string());
    assert_eq!(report["counts"]["true_positives"].as_u64().unwrap()
        + report["counts"]["false_positives"].as_u64().unwrap()
        + report["counts"]["true_negatives"].as_u64().unwrap()
        + report["counts"]["false_negatives"].as_u64().unwrap(), 40);

    // A threshold nothing exceeds flags nothing: recall 0.
    let out = run_in(
        dir.path(),
        &[
            "evaluate",
            "--data",
            data_s,
            "--checkpoint",
            "m.ckpt",
            "--threshold-policy",
            "fixed:1e9",
        ],
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["metrics"]["recall"].as_f64().unwrap(), 0.0);
    assert_eq!(report["counts"]["true_positives"].as_u64().unwrap(), 0);
}

#[test]
fn compare_optimizers_identical_kinds_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(
        dir.path(),
        &[
            "gen-synthetic",
            "--out",
            "syn.csv",
            "--n",
            "400",
            "--seed",
            "6",
            "--anomaly-fraction",
            "0.1",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "compare-optimizers",
            "--data",
            "syn.csv",
            "--kinds",
            "adam,adam",
            "--epochs",
            "3",
            "--batch-size",
            "64",
            "--hidden-dims",
            "8",
            "--num-components",
            "2",
            "--out",
            "cmp",
        ],
    );
    assert_success(&out);
    let rows = data_rows(&dir.path().join("cmp.csv"));
    assert_eq!(rows.len(), 2);
    let a: Vec<&str> = rows[0].splitn(2, ',').collect();
    let b: Vec<&str> = rows[1].splitn(2, ',').collect();
    assert_eq!(a[1], b[1], "identical kinds must produce identical rows");
    assert!(dir.path().join("cmp.json").is_file());
}

#[test]
fn score_rejects_mismatched_data_for_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(
        dir.path(),
        &["gen-synthetic", "--out", "syn.csv", "--n", "200", "--anomaly-fraction", "0.0"],
    ));
    assert_success(&run_in(
        dir.path(),
        &[
            "train", "--data", "syn.csv", "--epochs", "2", "--hidden-dims", "8",
            "--num-components", "2", "--batch-size", "64",
        ],
    ));
    // A file lacking the checkpoint's feature columns is a usage error.
    std::fs::write(dir.path().join("other.csv"), "a,b\n1,2\n").unwrap();
    let out = run_in(
        dir.path(),
        &["score", "--data", "other.csv", "--checkpoint", "model.ckpt"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing required column"), "{err}");
}

#[test]
fn config_env_var_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.conf"), "epochs=2\nhidden_dims=4\nnum_components=2\n")
        .unwrap();
    assert_success(&run_in(
        dir.path(),
        &["gen-synthetic", "--out", "syn.csv", "--n", "120", "--anomaly-fraction", "0.0"],
    ));
    let out = mdn()
        .current_dir(dir.path())
        .env("MDN_CONFIG", dir.path().join("cfg.conf"))
        .args(["train", "--data", "syn.csv", "--batch-size", "32"])
        .output()
        .unwrap();
    assert_success(&out);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["epochs_run"], 2);
    assert_eq!(summary["config"]["hidden_dims"], "4");
    // Flag overrode the file default.
    assert_eq!(summary["config"]["batch_size"], "32");
}

#[test]
fn corrupted_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ckpt"), "mdn-checkpoint\nformat_version 1\n").unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y,label\n1,2,0\n").unwrap();
    let out = run_in(
        dir.path(),
        &["score", "--data", "d.csv", "--checkpoint", "bad.ckpt"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}
