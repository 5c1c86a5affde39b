mod common;

use rand::Rng;

use common::*;
use qttn_core::jets::{event_to_tree, LundConfig, LundTree};
use qttn_core::models::{Mlp, MlpConfig, Model, Qttn, QttnConfig};
use qttn_core::toy::{generate, ToyGenConfig};
use qttn_core::train::{
    assign_splits, evaluate_auc, kfold_lowdata, lr_at, train_model, Dataset, Record, Split, TrainConfig,
};

fn toy_trees(n_per_class: usize, seed: u64) -> Dataset<LundTree> {
    let events = generate(&ToyGenConfig {
        n_events: n_per_class,
        seed,
        ..ToyGenConfig::default()
    })
    .unwrap();
    let labels: Vec<u8> = events.iter().map(|e| e.label).collect();
    let splits = assign_splits(&labels, 0.7, 0.15, seed).unwrap();
    let cfg = LundConfig::default();
    let records = events
        .iter()
        .zip(splits)
        .map(|(e, split)| Record {
            input: event_to_tree(&e.particles, &cfg).unwrap().unwrap(),
            label: e.label,
            split,
        })
        .collect();
    Dataset::new(records).unwrap()
}

#[test]
fn schedule_hits_its_anchors_and_is_piecewise_monotone() {
    let cfg = TrainConfig::default();
    let warm = cfg.warmup_epochs as f64 / cfg.epochs as f64;
    assert!((lr_at(0.0, &cfg) - 1e-3).abs() < 1e-15);
    assert!((lr_at(warm, &cfg) - 5e-3).abs() < 1e-15);
    assert!((lr_at(1.0, &cfg) - 1e-3).abs() < 1e-15);

    let grid: Vec<f64> = (0..=10_000).map(|i| lr_at(i as f64 / 10_000.0, &cfg)).collect();
    let max = grid.iter().cloned().fold(f64::MIN, f64::max);
    assert!((max - cfg.lr_peak).abs() < 1e-12);
    let split = (warm * 10_000.0).round() as usize;
    for i in 1..grid.len() {
        let d = grid[i] - grid[i - 1];
        if i <= split {
            assert!(d >= -1e-12, "warmup decreases at {i}");
        } else {
            assert!(d <= 1e-12, "decay increases at {i}");
        }
        // slope bounded by the warmup ramp: 4e-3 over 0.2 gives 0.02 per unit t
        assert!(d.abs() <= 0.02 / 10_000.0 + 1e-12, "jump at {i}");
    }
}

#[test]
fn training_is_reproducible() {
    let data = toy_trees(150, 1);
    let cfg = TrainConfig {
        epochs: 3,
        warmup_epochs: 1,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let a = train_model(Qttn::new(QttnConfig::new(3, 1), 0).unwrap(), &data, &cfg).unwrap();
    let b = train_model(Qttn::new(QttnConfig::new(3, 1), 0).unwrap(), &data, &cfg).unwrap();
    let bits = |m: &Qttn| m.params().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.best), bits(&b.best));
    assert_eq!(a.history, b.history);
}

#[test]
fn mlp_fits_separable_data() {
    let mut r = rng(51);
    let records: Vec<Record<Vec<f64>>> = (0..600)
        .map(|i| {
            let label = (i % 2) as u8;
            let shift = if label == 1 { 1.5 } else { -1.5 };
            let x: Vec<f64> = (0..14).map(|_| shift + r.random_range(-1.0..1.0)).collect();
            Record {
                input: x,
                label,
                split: [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test][i % 5],
            }
        })
        .collect();
    let data = Dataset::new(records).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let out = train_model(Mlp::new(MlpConfig::new(14, vec![9]), 0).unwrap(), &data, &cfg).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < 0.1 * first.max(std::f64::consts::LN_2), "loss {first} -> {last}");
    assert!(evaluate_auc(&out.best, &data, &data.indices(Split::Test)).unwrap() > 0.99);
}

#[test]
fn single_full_fold_matches_plain_training() {
    let data = toy_trees(120, 2).map(|t| t.flatten());
    let cfg = TrainConfig {
        epochs: 3,
        warmup_epochs: 1,
        batch_size: 50,
        seed: 7,
        ..TrainConfig::default()
    };
    let mlp = |seed: u64| Mlp::new(MlpConfig::new(14, vec![4, 3]), seed);
    let (n_train, _) = data.class_counts(Split::Train);
    assert_eq!(n_train, data.class_counts(Split::Train).1);
    let points = kfold_lowdata(&data, &[n_train], 1, mlp, &cfg).unwrap();
    let plain = train_model(mlp(cfg.seed).unwrap(), &data, &cfg).unwrap();
    let test = evaluate_auc(&plain.best, &data, &data.indices(Split::Test)).unwrap();
    assert_eq!(points[0].fold_aucs, vec![test]);
    assert_eq!(points[0].std_auc, 0.0);
}

#[test]
fn kfold_is_deterministic() {
    let data = toy_trees(100, 3).map(|t| t.flatten());
    let cfg = TrainConfig {
        epochs: 2,
        warmup_epochs: 1,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let mlp = |seed: u64| Mlp::new(MlpConfig::new(14, vec![4]), seed);
    let a = kfold_lowdata(&data, &[10, 40], 3, mlp, &cfg).unwrap();
    let b = kfold_lowdata(&data, &[10, 40], 3, mlp, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].fold_aucs.len(), 3);
}
