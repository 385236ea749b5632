//! Mini-batch training loop with a seeded train/validation split, per-epoch
//! loss curves, the trailing-window loss-variance stability metric, and a
//! multi-optimizer comparison harness.
//!
//! A run is a pure function of (model config, dataset, train config): the
//! seed drives one PRNG that is consumed in a fixed order — split first,
//! then weight initialization, then one shuffle per epoch. Epoch losses are
//! recorded by a frozen full pass over each split after the epoch's updates,
//! never as running batch averages, so curves are comparable across batch
//! sizes.

use alloc::format;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{backward, forward, init_params, nll_loss, MdnConfig, NetworkParams};
use crate::optim::{step, OptimizerKind, OptimizerSpec, OptimizerState};
use crate::rng::Rng;
use crate::score::{anomaly_score, calibrate_threshold, classify, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub val_fraction: f64,
    pub seed: u64,
    /// Trailing epochs entering the loss-variance stability metric.
    pub variance_window: usize,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 256,
            optimizer: OptimizerSpec::default_for(OptimizerKind::AdamW),
            val_fraction: 0.2,
            seed: 42,
            variance_window: 10,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: alloc::string::String| {
            Err(Error::InvalidArgument {
                op: "TrainConfig::validate",
                reason,
            })
        };
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if self.variance_window == 0 || self.variance_window > self.epochs {
            return fail(format!(
                "variance_window must be in [1, epochs], got {}",
                self.variance_window
            ));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss_curve: Vec<f64>,
    pub val_loss_curve: Vec<f64>,
    pub loss_variance: f64,
    pub epochs_run: usize,
    pub wall_clock_seconds: f64,
}

/// Seeded shuffle, then an exact split: the validation set takes
/// round(val_fraction * n) records (at least 1, at most n-1) from the tail
/// of the shuffled order.
pub fn split_train_val(
    dataset: &Dataset,
    val_fraction: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::InvalidArgument {
            op: "split_train_val",
            reason: format!("need at least 2 records, got {}", dataset.len()),
        });
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument {
            op: "split_train_val",
            reason: format!("val_fraction must be in (0, 1), got {val_fraction}"),
        });
    }
    let n = dataset.len();
    let n_val = (math::round(val_fraction * n as f64) as usize).clamp(1, n - 1);
    let order = rng.permutation(n);
    let (train_idx, val_idx) = order.split_at(n - n_val);
    Ok((dataset.subset(train_idx)?, dataset.subset(val_idx)?))
}

fn full_pass_loss(params: &NetworkParams, set: &Dataset) -> Result<f64> {
    let (out, _) = forward(params, &set.features)?;
    nll_loss(&out, &set.targets)
}

#[cfg(feature = "std")]
fn now_seconds() -> f64 {
    use std::sync::OnceLock;
    use std::time::Instant;
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64()
}

#[cfg(not(feature = "std"))]
fn now_seconds() -> f64 {
    0.0
}

/// Train a fresh model on `dataset` and report both loss curves.
pub fn train(
    model: &MdnConfig,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    cfg.validate()?;
    model.validate()?;
    if model.input_dim != dataset.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train",
            left: (dataset.len(), dataset.input_dim()),
            right: (model.input_dim, 1),
        });
    }
    let started = now_seconds();
    // Fixed PRNG consumption order: split, init, per-epoch shuffles.
    let mut rng = Rng::new(cfg.seed);
    let (train_set, val_set) = split_train_val(dataset, cfg.val_fraction, &mut rng)?;
    let mut params = init_params(model, &mut rng)?;
    let mut state = OptimizerState::new();

    let n_train = train_set.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            order = rng.permutation(n_train);
        }
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = train_set.features.take_rows(chunk)?;
            let yb: Vec<f64> = chunk.iter().map(|&i| train_set.targets[i]).collect();
            let (out, cache) = forward(&params, &xb)?;
            let diverged = Error::Diverged {
                epoch,
                batch: Some(b),
            };
            // A mixture whose every term underflowed is divergence too.
            let batch_loss = match nll_loss(&out, &yb) {
                Ok(l) => l,
                Err(Error::DegenerateMixture) => return Err(diverged),
                Err(e) => return Err(e),
            };
            if !batch_loss.is_finite() {
                return Err(diverged);
            }
            let grads = backward(&params, &cache, &out, &yb)?;
            step(&cfg.optimizer, &mut state, &mut params, &grads)?;
        }
        let diverged = Error::Diverged { epoch, batch: None };
        let (train_loss, val_loss) = match (
            full_pass_loss(&params, &train_set),
            full_pass_loss(&params, &val_set),
        ) {
            (Ok(t), Ok(v)) => (t, v),
            (Err(Error::DegenerateMixture), _) | (_, Err(Error::DegenerateMixture)) => {
                return Err(diverged)
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged);
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);
    }

    let variance = loss_variance(&train_curve, cfg.variance_window)?;
    let report = TrainReport {
        train_loss_curve: train_curve,
        val_loss_curve: val_curve,
        loss_variance: variance,
        epochs_run: cfg.epochs,
        wall_clock_seconds: now_seconds() - started,
    };
    Ok((params, report))
}

/// Population variance of the last `window` entries of a loss curve.
pub fn loss_variance(curve: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > curve.len() {
        return Err(Error::InvalidArgument {
            op: "loss_variance",
            reason: format!(
                "window must be in [1, {}], got {window}",
                curve.len()
            ),
        });
    }
    let tail = &curve[curve.len() - window..];
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    Ok(tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// One comparison row per optimizer kind.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerComparison {
    pub kind: OptimizerKind,
    pub accuracy: f64,
    pub f1: f64,
    pub loss_variance: f64,
    pub final_train_loss: f64,
}

/// Train one model per kind from identical initial parameters and batch
/// order (all arms share the seed, and the optimizer consumes no
/// randomness), then evaluate each arm on the validation split: thresholds
/// are calibrated on the training split's normal-labeled scores at the
/// default quantile policy.
pub fn compare_optimizers(
    model: &MdnConfig,
    dataset: &Dataset,
    base: &TrainConfig,
    kinds: &[OptimizerKind],
) -> Result<Vec<OptimizerComparison>> {
    if kinds.len() < 2 {
        return Err(Error::InvalidArgument {
            op: "compare_optimizers",
            reason: format!("need at least 2 optimizer kinds, got {}", kinds.len()),
        });
    }
    if dataset.labels.is_none() {
        return Err(Error::InvalidArgument {
            op: "compare_optimizers",
            reason: "dataset has no labels to evaluate against".into(),
        });
    }
    // Reproduce the split exactly as train() derives it: the split is the
    // first consumer of the run PRNG.
    let mut rng = Rng::new(base.seed);
    let (train_set, val_set) = split_train_val(dataset, base.val_fraction, &mut rng)?;
    let val_labels = val_set.labels.as_ref().unwrap();

    let mut rows = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut cfg = base.clone();
        cfg.optimizer = OptimizerSpec::default_for(kind);
        let (params, report) = train(model, dataset, &cfg)?;

        let cal_idx: Vec<usize> = match &train_set.labels {
            Some(labels) => (0..train_set.len()).filter(|&i| !labels[i]).collect(),
            None => (0..train_set.len()).collect(),
        };
        let cal_set = train_set.subset(&cal_idx)?;
        let cal_scores = anomaly_score(&params, &cal_set.features, &cal_set.targets)?;
        let threshold = calibrate_threshold(&cal_scores, &ThresholdPolicy::default())?;
        let val_scores = anomaly_score(&params, &val_set.features, &val_set.targets)?;
        let flags = classify(&val_scores, threshold)?;
        let counts = crate::metrics::confusion(&flags, val_labels)?;

        rows.push(OptimizerComparison {
            kind,
            accuracy: crate::metrics::accuracy(&counts)?,
            f1: crate::metrics::f1(&counts)?.value,
            loss_variance: report.loss_variance,
            final_train_loss: *report.train_loss_curve.last().unwrap(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_bimodal;
    use alloc::vec;

    fn small_dataset(n: usize, seed: u64) -> Dataset {
        gen_synthetic_bimodal(n, &mut Rng::new(seed), 0.1).unwrap()
    }

    fn small_config(epochs: usize) -> (MdnConfig, TrainConfig) {
        let model = MdnConfig {
            activation: crate::model::Activation::Tanh,
            ..MdnConfig::new(1, vec![16], 2)
        };
        let cfg = TrainConfig {
            epochs,
            batch_size: 32,
            variance_window: epochs.min(10),
            ..TrainConfig::default()
        };
        (model, cfg)
    }

    #[test]
    fn split_is_exact_and_seeded() {
        let ds = small_dataset(10, 1);
        let (train_a, val_a) = split_train_val(&ds, 0.2, &mut Rng::new(7)).unwrap();
        assert_eq!((train_a.len(), val_a.len()), (8, 2));
        let (train_b, val_b) = split_train_val(&ds, 0.2, &mut Rng::new(7)).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(val_a, val_b);
    }

    #[test]
    fn split_partitions_the_records() {
        let ds = small_dataset(57, 3);
        let (train_set, val_set) = split_train_val(&ds, 0.3, &mut Rng::new(5)).unwrap();
        assert_eq!(train_set.len() + val_set.len(), ds.len());
        // Every original target appears exactly once across the two splits.
        let mut seen: Vec<f64> = train_set
            .targets
            .iter()
            .chain(val_set.targets.iter())
            .copied()
            .collect();
        let mut expect = ds.targets.clone();
        seen.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        expect.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_rejects_too_small_or_bad_fraction() {
        let ds = small_dataset(10, 1);
        assert!(split_train_val(&ds.subset(&[0]).unwrap(), 0.2, &mut Rng::new(1)).is_err());
        assert!(split_train_val(&ds, 0.0, &mut Rng::new(1)).is_err());
        assert!(split_train_val(&ds, 1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn full_batch_single_epoch_is_one_optimizer_step() {
        let ds = small_dataset(40, 2);
        let (model, mut cfg) = small_config(1);
        cfg.batch_size = 1000; // larger than the training split
        cfg.variance_window = 1;
        let (params, report) = train(&model, &ds, &cfg).unwrap();
        assert_eq!(report.epochs_run, 1);

        // Replay by hand: same PRNG order, one step over the whole split.
        let mut rng = Rng::new(cfg.seed);
        let (train_set, _) = split_train_val(&ds, cfg.val_fraction, &mut rng).unwrap();
        let mut manual = init_params(&model, &mut rng).unwrap();
        let order = rng.permutation(train_set.len());
        let xb = train_set.features.take_rows(&order).unwrap();
        let yb: Vec<f64> = order.iter().map(|&i| train_set.targets[i]).collect();
        let (out, cache) = forward(&manual, &xb).unwrap();
        let grads = backward(&manual, &cache, &out, &yb).unwrap();
        let mut state = OptimizerState::new();
        step(&cfg.optimizer, &mut state, &mut manual, &grads).unwrap();
        assert_eq!(params, manual);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let ds = small_dataset(120, 11);
        let (model, cfg) = small_config(3);
        let (p1, r1) = train(&model, &ds, &cfg).unwrap();
        let (p2, r2) = train(&model, &ds, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.train_loss_curve, r2.train_loss_curve);
        assert_eq!(r1.val_loss_curve, r2.val_loss_curve);
        assert_eq!(r1.loss_variance, r2.loss_variance);
    }

    #[test]
    fn recorded_epoch_loss_is_a_frozen_full_pass() {
        // Determinism makes the (k-1)-epoch run's final params equal the
        // k-epoch run's params after epoch k-1, so curve entries must match
        // a fresh full-pass evaluation of those params.
        let ds = small_dataset(80, 13);
        let (model, cfg3) = small_config(3);
        let mut cfg2 = cfg3.clone();
        cfg2.epochs = 2;
        cfg2.variance_window = 2;
        let (p2, _) = train(&model, &ds, &cfg2).unwrap();
        let (_, r3) = train(&model, &ds, &cfg3).unwrap();

        let mut rng = Rng::new(cfg3.seed);
        let (train_set, val_set) = split_train_val(&ds, cfg3.val_fraction, &mut rng).unwrap();
        let train_loss = full_pass_loss(&p2, &train_set).unwrap();
        let val_loss = full_pass_loss(&p2, &val_set).unwrap();
        assert!((r3.train_loss_curve[1] - train_loss).abs() < 1e-12);
        assert!((r3.val_loss_curve[1] - val_loss).abs() < 1e-12);
        // Frozen evaluation: repeating it changes nothing.
        assert_eq!(train_loss, full_pass_loss(&p2, &train_set).unwrap());
    }

    #[test]
    fn divergence_is_reported_with_location() {
        let ds = small_dataset(60, 17);
        let (model, mut cfg) = small_config(8);
        cfg.variance_window = 1;
        cfg.optimizer.learning_rate = 1e18;
        match train(&model, &ds, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn loss_variance_examples() {
        assert_eq!(loss_variance(&[1.0, 1.0, 1.0], 3).unwrap(), 0.0);
        assert_eq!(loss_variance(&[0.0, 2.0], 2).unwrap(), 1.0);
        assert_eq!(loss_variance(&[5.0, -3.0, 9.0], 1).unwrap(), 0.0);
        assert!(loss_variance(&[1.0], 2).is_err());
        assert!(loss_variance(&[1.0], 0).is_err());
    }

    #[test]
    fn loss_variance_is_shift_invariant() {
        let curve = [0.4, 0.1, 0.15, 0.12, 0.11];
        let shifted: Vec<f64> = curve.iter().map(|v| v + 123.456).collect();
        let a = loss_variance(&curve, 4).unwrap();
        let b = loss_variance(&shifted, 4).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn synthetic_loss_halves_within_thirty_epochs() {
        let ds = small_dataset(1500, 21);
        let (model, mut cfg) = small_config(30);
        cfg.batch_size = 64;
        let (_, report) = train(&model, &ds, &cfg).unwrap();
        let first = report.train_loss_curve[0];
        let last = *report.train_loss_curve.last().unwrap();
        assert!(
            last < 0.5 * first,
            "first {first}, last {last} (no 50% drop)"
        );
    }

    #[test]
    fn compare_identical_kinds_gives_identical_rows() {
        let ds = small_dataset(300, 23);
        let tainted = crate::data::inject_anomalies(&ds, 0.05, &mut Rng::new(1), 10.0).unwrap();
        let (model, mut cfg) = small_config(3);
        cfg.batch_size = 64;
        let rows = compare_optimizers(
            &model,
            &tainted,
            &cfg,
            &[OptimizerKind::Adam, OptimizerKind::Adam],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].accuracy, rows[1].accuracy);
        assert_eq!(rows[0].f1, rows[1].f1);
        assert_eq!(rows[0].loss_variance, rows[1].loss_variance);
    }

    #[test]
    fn compare_requires_labels_and_two_kinds() {
        let ds = small_dataset(50, 29);
        let (model, cfg) = small_config(1);
        assert!(compare_optimizers(&model, &ds, &cfg, &[OptimizerKind::Adam]).is_err());
        assert!(
            compare_optimizers(&model, &ds, &cfg, &[OptimizerKind::Adam, OptimizerKind::Sgd])
                .is_err()
        );
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { val_fraction: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { variance_window: 51, ..ok }.validate().is_err());
    }
}
