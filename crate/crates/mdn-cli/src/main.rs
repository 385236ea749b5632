//! `mdn`: synthetic data generation, training, scoring, evaluation, and the
//! optimizer comparison, as one pipeline binary.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mdn_cli::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use mdn_cli::csv_io;
use mdn_cli::report;
use mdn_cli::RunConfig;
use mdn_core::data::{apply_preprocess, fit_preprocess, gen_synthetic_bimodal, inject_anomalies};
use mdn_core::metrics::metrics_report;
use mdn_core::model::NetworkParams;
use mdn_core::optim::OptimizerKind;
use mdn_core::score::{anomaly_report, anomaly_score, ThresholdPolicy};
use mdn_core::train::{compare_optimizers, train};
use mdn_core::{Matrix, Rng};

#[derive(Parser)]
#[command(
    name = "mdn",
    version,
    about = "Conditional density modeling of tabular records with NLL anomaly scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic bimodal benchmark CSV plus a ground-truth sidecar
    GenSynthetic(GenSyntheticArgs),
    /// Train a model; writes a checkpoint, loss curves, and a run summary
    Train(TrainArgs),
    /// Score records against a checkpoint; writes per-record scores
    Score(ScoreArgs),
    /// Score, calibrate a threshold, classify, and report metrics as JSON
    Evaluate(EvaluateArgs),
    /// Train one arm per optimizer kind and tabulate stability metrics
    CompareOptimizers(CompareArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output CSV path; the sidecar is written next to it as <out>.truth.json
    #[arg(long, default_value = "synthetic.csv")]
    out: PathBuf,
    /// Number of records
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of records turned anomalous, in [0, 0.5); 0 disables injection
    #[arg(long, default_value_t = 0.05)]
    anomaly_fraction: f64,
    /// Noise standard deviation of the generator
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    /// Anomaly offset in units of noise_sigma
    #[arg(long, default_value_t = 10.0)]
    shift: f64,
}

/// Config file plus per-run overrides; flags win over file values.
#[derive(Args)]
struct ConfigArgs {
    /// key=value config file (falls back to $MDN_CONFIG when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sgd | rmsprop | adam | adamw | adabelief
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Comma-separated trunk widths, e.g. 64,32 (use `-` for no trunk)
    #[arg(long)]
    hidden_dims: Option<String>,
    #[arg(long)]
    num_components: Option<usize>,
    /// relu | tanh
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    target_column: Option<String>,
    /// Column with 0/1 labels; `-` clears it
    #[arg(long)]
    label_column: Option<String>,
    /// quantile[:q] | mean_plus_k_sigma[:k] | fixed:value
    #[arg(long)]
    threshold_policy: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(self.config.as_deref()).map_err(usage)?;
        let mut set = |key: &str, value: Option<String>| -> Result<(), CliError> {
            if let Some(v) = value {
                config.set(key, &v).map_err(usage)?;
            }
            Ok(())
        };
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("optimizer", self.optimizer.clone())?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("hidden_dims", self.hidden_dims.clone())?;
        set("num_components", self.num_components.map(|v| v.to_string()))?;
        set("activation", self.activation.clone())?;
        set("val_fraction", self.val_fraction.map(|v| v.to_string()))?;
        set("target_column", self.target_column.clone())?;
        set("label_column", self.label_column.clone())?;
        set("threshold_policy", self.threshold_policy.clone())?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "model.ckpt")]
    out_checkpoint: PathBuf,
    #[arg(long, default_value = "curves.csv")]
    out_curves: PathBuf,
    #[arg(long, default_value = "run_summary.json")]
    out_summary: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// CSV of records to score
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "scores.csv")]
    out_scores: PathBuf,
    /// Threshold for the flag column, calibrated on the scored batch itself
    #[arg(long, default_value = "quantile:0.99")]
    threshold_policy: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled CSV to evaluate on
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "quantile:0.99")]
    threshold_policy: String,
    /// Also write the JSON report here (stdout either way)
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Labeled CSV to train and evaluate on
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated optimizer kinds
    #[arg(long, default_value = "sgd,rmsprop,adam,adamw,adabelief")]
    kinds: String,
    /// Output base path; writes <out>.csv and <out>.json
    #[arg(long, default_value = "comparison")]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::CompareOptimizers(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(error)) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}

fn check_input_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "input file `{}` does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("cannot write `{}`", path.display()))
        .map_err(CliError::Runtime)
}

fn sidecar_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.truth.json", out.display()))
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    if !(0.0..0.5).contains(&args.anomaly_fraction) {
        return Err(CliError::Usage(format!(
            "--anomaly-fraction must be in [0, 0.5), got {}",
            args.anomaly_fraction
        )));
    }
    if !(args.noise_sigma > 0.0) {
        return Err(CliError::Usage(format!(
            "--noise-sigma must be > 0, got {}",
            args.noise_sigma
        )));
    }
    let mut rng = Rng::new(args.seed);
    let mut dataset = gen_synthetic_bimodal(args.n, &mut rng, args.noise_sigma).map_err(runtime)?;
    if args.anomaly_fraction > 0.0 {
        dataset = inject_anomalies(&dataset, args.anomaly_fraction, &mut rng, args.shift)
            .map_err(runtime)?;
    }
    let labels = dataset
        .labels
        .clone()
        .unwrap_or_else(|| vec![false; dataset.len()]);
    let truth = dataset.truth.as_ref().expect("synthetic data carries truth");
    let xs: Vec<f64> = (0..dataset.len()).map(|i| dataset.features.get(i, 0)).collect();
    let mut true_log_density = Vec::with_capacity(dataset.len());
    for (i, &x) in xs.iter().enumerate() {
        true_log_density.push(truth.log_density(x, dataset.targets[i]).map_err(runtime)?);
    }

    let provenance = vec![
        ("command".to_string(), "gen-synthetic".to_string()),
        ("n".to_string(), args.n.to_string()),
        ("seed".to_string(), args.seed.to_string()),
        (
            "anomaly_fraction".to_string(),
            args.anomaly_fraction.to_string(),
        ),
        ("noise_sigma".to_string(), args.noise_sigma.to_string()),
        ("shift".to_string(), args.shift.to_string()),
    ];
    csv_io::write_synthetic_csv(&args.out, &xs, &dataset.targets, &labels, &provenance)
        .map_err(CliError::Runtime)?;
    let sidecar = report::truth_sidecar_json(
        args.noise_sigma,
        args.anomaly_fraction,
        args.shift,
        &true_log_density,
        &provenance,
    );
    let sidecar_path = sidecar_path(&args.out);
    write_json(&sidecar_path, &sidecar)?;
    println!(
        "wrote {} records ({} anomalous) to {} (+ {})",
        args.n,
        labels.iter().filter(|&&l| l).count(),
        args.out.display(),
        sidecar_path.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    check_input_file(&args.data)?;
    let config = args.config.resolve()?;
    let table = csv_io::load_csv(&args.data).map_err(CliError::Runtime)?;
    let dataset = fit_preprocess(&table, &config.schema_spec(), &args.data.display().to_string())
        .map_err(usage)?;
    let model = config.mdn_config(dataset.input_dim());
    let train_config = config.train_config();
    train_config.validate().map_err(usage)?;
    model.validate().map_err(usage)?;

    let (params, train_report) = train(&model, &dataset, &train_config).map_err(runtime)?;

    let mut provenance = vec![
        ("command".to_string(), "train".to_string()),
        ("data".to_string(), args.data.display().to_string()),
    ];
    provenance.extend(config.to_pairs());

    let checkpoint = Checkpoint {
        config: model,
        params,
        norm_stats: dataset.norm_stats.clone(),
        provenance: provenance.clone(),
    };
    save_checkpoint(&args.out_checkpoint, &checkpoint).map_err(runtime)?;
    csv_io::write_curves_csv(
        &args.out_curves,
        &train_report.train_loss_curve,
        &train_report.val_loss_curve,
        &provenance,
    )
    .map_err(CliError::Runtime)?;
    let summary = report::train_summary_json(
        &train_report,
        &args.out_checkpoint.display().to_string(),
        &args.out_curves.display().to_string(),
        &provenance,
    );
    write_json(&args.out_summary, &summary)?;
    println!(
        "trained {} epochs: train loss {:.6}, val loss {:.6}, loss variance {:.3e} -> {}",
        train_report.epochs_run,
        train_report.train_loss_curve.last().unwrap(),
        train_report.val_loss_curve.last().unwrap(),
        train_report.loss_variance,
        args.out_checkpoint.display()
    );
    Ok(())
}

/// Preprocess a table with a checkpoint's stored statistics and score it.
fn scored_records(
    checkpoint: &Checkpoint,
    data: &Path,
) -> Result<(Vec<f64>, Option<Vec<bool>>, usize), CliError> {
    let table = csv_io::load_csv(data).map_err(CliError::Runtime)?;
    let dataset = apply_preprocess(&table, &checkpoint.norm_stats, &data.display().to_string())
        .map_err(usage)?;
    let scores = score_dataset(&checkpoint.params, &dataset.features, &dataset.targets)?;
    let n = dataset.len();
    Ok((scores, dataset.labels, n))
}

fn score_dataset(
    params: &NetworkParams,
    features: &Matrix,
    targets: &[f64],
) -> Result<Vec<f64>, CliError> {
    anomaly_score(params, features, targets).map_err(runtime)
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    check_input_file(&args.data)?;
    check_input_file(&args.checkpoint)?;
    let policy = ThresholdPolicy::from_str(&args.threshold_policy).map_err(usage)?;
    let checkpoint = load_checkpoint(&args.checkpoint).map_err(runtime)?;
    let (scores, _, n) = scored_records(&checkpoint, &args.data)?;
    let anomaly = anomaly_report(&scores, &policy, &scores).map_err(runtime)?;

    let mut provenance = vec![
        ("command".to_string(), "score".to_string()),
        ("data".to_string(), args.data.display().to_string()),
        (
            "checkpoint".to_string(),
            args.checkpoint.display().to_string(),
        ),
        (
            "threshold_policy".to_string(),
            args.threshold_policy.clone(),
        ),
        ("threshold".to_string(), format!("{}", anomaly.threshold)),
    ];
    provenance.extend(checkpoint.provenance.clone());
    csv_io::write_scores_csv(&args.out_scores, &anomaly.scores, &anomaly.flags, &provenance)
        .map_err(CliError::Runtime)?;
    println!(
        "scored {} records, {} flagged (threshold {:.6}) -> {}",
        n,
        anomaly.flags.iter().filter(|&&f| f).count(),
        anomaly.threshold,
        args.out_scores.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    check_input_file(&args.data)?;
    check_input_file(&args.checkpoint)?;
    let policy = ThresholdPolicy::from_str(&args.threshold_policy).map_err(usage)?;
    let checkpoint = load_checkpoint(&args.checkpoint).map_err(runtime)?;
    let (scores, labels, _) = scored_records(&checkpoint, &args.data)?;
    let labels = labels.ok_or_else(|| {
        CliError::Usage(format!(
            "evaluation needs labels: column `{}` not found in `{}`",
            checkpoint
                .norm_stats
                .label_column
                .as_deref()
                .unwrap_or("<unset>"),
            args.data.display()
        ))
    })?;

    // Calibrate on the normal-labeled records of the evaluated data.
    let calibration_scores: Vec<f64> = scores
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let anomaly = anomaly_report(&calibration_scores, &policy, &scores).map_err(usage)?;
    let metrics = metrics_report(&scores, &anomaly.flags, &labels, None).map_err(usage)?;

    let mut provenance = vec![
        ("command".to_string(), "evaluate".to_string()),
        ("data".to_string(), args.data.display().to_string()),
        (
            "checkpoint".to_string(),
            args.checkpoint.display().to_string(),
        ),
    ];
    provenance.extend(checkpoint.provenance.clone());
    let value = report::metrics_json(
        &metrics,
        anomaly.threshold,
        &args.threshold_policy,
        &anomaly.calibration,
        "normal-labeled records of --data",
        &provenance,
    );
    let text = serde_json::to_string_pretty(&value).map_err(runtime)?;
    println!("{text}");
    if let Some(path) = &args.out_report {
        write_json(path, &value)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    check_input_file(&args.data)?;
    let config = args.config.resolve()?;
    let kinds: Vec<OptimizerKind> = args
        .kinds
        .split(',')
        .map(|k| OptimizerKind::from_str(k.trim()).map_err(usage))
        .collect::<Result<_, _>>()?;
    let table = csv_io::load_csv(&args.data).map_err(CliError::Runtime)?;
    let dataset = fit_preprocess(&table, &config.schema_spec(), &args.data.display().to_string())
        .map_err(usage)?;
    if dataset.labels.is_none() {
        return Err(CliError::Usage(format!(
            "optimizer comparison needs labels: set label_column and include it in `{}`",
            args.data.display()
        )));
    }
    let model = config.mdn_config(dataset.input_dim());
    let base = config.train_config();
    base.validate().map_err(usage)?;
    let rows = compare_optimizers(&model, &dataset, &base, &kinds).map_err(runtime)?;

    let mut provenance = vec![
        ("command".to_string(), "compare-optimizers".to_string()),
        ("data".to_string(), args.data.display().to_string()),
        ("kinds".to_string(), args.kinds.clone()),
    ];
    provenance.extend(config.to_pairs());
    let csv_path = PathBuf::from(format!("{}.csv", args.out.display()));
    let json_path = PathBuf::from(format!("{}.json", args.out.display()));
    csv_io::write_comparison_csv(&csv_path, &rows, &provenance).map_err(CliError::Runtime)?;
    write_json(&json_path, &report::comparison_json(&rows, &provenance))?;
    for row in &rows {
        println!(
            "{:<10} accuracy {:.4}  f1 {:.4}  loss_variance {:.3e}  final_train_loss {:.6}",
            row.kind.name(),
            row.accuracy,
            row.f1,
            row.loss_variance,
            row.final_train_loss
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
