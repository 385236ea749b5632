// Scratch experiment for pinning benchmark settings; not part of the build.
use mdn_core::data::{gen_synthetic_bimodal, inject_anomalies};
use mdn_core::metrics::{confusion, recall, roc_auc};
use mdn_core::model::{Activation, MdnConfig};
use mdn_core::optim::OptimizerKind;
use mdn_core::score::{anomaly_score, calibrate_threshold, classify, ThresholdPolicy};
use mdn_core::train::{compare_optimizers, split_train_val, train, TrainConfig};
use mdn_core::Rng;

fn main() {
    // Criterion-4 style run: train on contaminated data, evaluate val split.
    let clean = gen_synthetic_bimodal(5000, &mut Rng::new(303), 0.1).unwrap();
    let tainted = inject_anomalies(&clean, 0.05, &mut Rng::new(404), 10.0).unwrap();
    let model = MdnConfig {
        activation: Activation::Tanh,
        ..MdnConfig::new(1, vec![32], 2)
    };
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 64,
        val_fraction: 0.2,
        seed: 77,
        variance_window: 10,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (params, _) = train(&model, &tainted, &cfg).unwrap();
    let mut rng = Rng::new(cfg.seed);
    let (train_set, val_set) = split_train_val(&tainted, cfg.val_fraction, &mut rng).unwrap();
    let train_labels = train_set.labels.as_ref().unwrap();
    let cal_idx: Vec<usize> = (0..train_set.len()).filter(|&i| !train_labels[i]).collect();
    let cal = train_set.subset(&cal_idx).unwrap();
    let cal_scores = anomaly_score(&params, &cal.features, &cal.targets).unwrap();
    let threshold = calibrate_threshold(&cal_scores, &ThresholdPolicy::default()).unwrap();
    let val_scores = anomaly_score(&params, &val_set.features, &val_set.targets).unwrap();
    let val_labels = val_set.labels.as_ref().unwrap();
    let auc = roc_auc(&val_scores, val_labels).unwrap();
    let flags = classify(&val_scores, threshold).unwrap();
    let counts = confusion(&flags, val_labels).unwrap();
    let rec = recall(&counts).unwrap().value;
    println!(
        "criterion4: auc {auc:.4}, recall {rec:.4} (threshold {threshold:.3}) n_val_anom {} [{:.1}s]",
        val_labels.iter().filter(|&&l| l).count(),
        t0.elapsed().as_secs_f64()
    );

    // Criterion-6 style run: five arms, shared seed.
    for (epochs, batch) in [(60usize, 64usize), (50, 32), (80, 64)] {
        let cfg = TrainConfig {
            epochs,
            batch_size: batch,
            ..cfg.clone()
        };
        let t0 = std::time::Instant::now();
        let rows = compare_optimizers(&model, &tainted, &cfg, &OptimizerKind::ALL).unwrap();
        println!("--- epochs {epochs} batch {batch} ({:.1}s)", t0.elapsed().as_secs_f64());
        for r in &rows {
            println!(
                "{:<10} acc {:.4} f1 {:.4} loss_var {:.3e} final {:.4}",
                r.kind.name(),
                r.accuracy,
                r.f1,
                r.loss_variance,
                r.final_train_loss
            );
        }
    }
}
