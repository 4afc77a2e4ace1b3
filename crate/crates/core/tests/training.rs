//! Losses, clipping, the learning-rate schedule and the training loop.

use bridgeflow::nets::{MlpConfig, Model, ModelConfig, Variant};
use bridgeflow::tensor::{Tape, Tensor};
use bridgeflow::train::{
    clip_gradients, fit, global_norm, lr_at, mae_loss, mse_loss, mse_per_category, uncertainty_loss,
    uncertainty_loss_shard, StopReason, TrainConfig, UncertaintyState,
};
use bridgeflow::{CategoryCounts, ModelGraph, WindowSample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<CategoryCounts> {
    (0..n)
        .map(|_| [0; 4].map(|_: i32| rng.gen_range(-3.0..3.0)))
        .collect()
}

#[test]
fn losses_match_hand_values() {
    let y = [[1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
    let p = [[2.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]];
    // squared errors 1 and 4 over 8 entries; absolute errors 1 and 2
    assert_eq!(mse_loss(&y, &p).unwrap(), 5.0 / 8.0);
    assert_eq!(mae_loss(&y, &p).unwrap(), 3.0 / 8.0);
    assert_eq!(mse_per_category(&y, &p).unwrap(), [0.5, 0.0, 0.0, 2.0]);
}

proptest! {
    #[test]
    fn zero_log_variance_gives_half_the_summed_mse(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, p) = (rows(n, &mut rng), rows(n, &mut rng));
        let half: f64 = 0.5 * mse_per_category(&y, &p).unwrap().iter().sum::<f64>();
        let u = uncertainty_loss(&y, &p, &UncertaintyState::default()).unwrap();
        prop_assert!((u - half).abs() <= 1e-12 * half.max(1.0));
    }

    #[test]
    fn shard_losses_sum_to_the_batch_loss(seed in any::<u64>(), n in 2usize..30, cut in 1usize..29) {
        let cut = cut.min(n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, p) = (rows(n, &mut rng), rows(n, &mut rng));
        let s = [0; 4].map(|_: i32| rng.gen_range(-2.0..2.0));
        let direct = uncertainty_loss(&y, &p, &UncertaintyState { s }).unwrap();
        let tape = Tape::new();
        let sv = tape.param(Tensor::vector(s.to_vec()));
        let mut total = 0.0;
        for (lo, hi) in [(0, cut), (cut, n)] {
            let flat = |r: &[CategoryCounts]| Tensor::from_parts(vec![hi - lo, 4], r[lo..hi].iter().flatten().copied().collect());
            let yh = tape.constant(flat(&p));
            total += uncertainty_loss_shard(yh, &flat(&y), sv, n).unwrap().value().item();
        }
        prop_assert!((total - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn clipping_never_grows_the_norm_nor_turns_it(seed in any::<u64>(), scale in 1e-3f64..1e3, max in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let before: Vec<Tensor> = (0..3)
            .map(|i| Tensor::from_fn(vec![i + 2], |_| scale * rng.gen_range(-1.0..1.0)))
            .collect();
        let mut after = before.clone();
        let reported = clip_gradients(&mut after, max);
        let (n0, n1) = (global_norm(&before), global_norm(&after));
        prop_assert_eq!(reported, n0);
        prop_assert!(n1 <= n0 * (1.0 + 1e-12));
        prop_assert!(n1 <= max * (1.0 + 1e-12));
        if n0 <= max {
            prop_assert_eq!(&after, &before);
        }
        let dot: f64 = before.iter().zip(&after).flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y)).sum();
        prop_assert!((dot / (n0 * n1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_stays_within_bounds(epoch in 0usize..1000) {
        let cfg = TrainConfig::default();
        let lr = lr_at(epoch, &cfg);
        prop_assert!(lr >= cfg.min_lr * (1.0 - 1e-12) && lr <= cfg.peak_lr * (1.0 + 1e-12));
    }
}

#[test]
fn schedule_warms_up_then_anneals_and_restarts() {
    let cfg = TrainConfig::default();
    for e in 0..30 {
        assert!((lr_at(e, &cfg) - 0.005 * (e + 1) as f64 / 30.0).abs() < 1e-15);
    }
    assert_eq!(lr_at(29, &cfg), 0.005);
    assert_eq!(lr_at(30, &cfg), 0.005);
    assert!((lr_at(80, &cfg) - (1e-7 + (0.005 - 1e-7) * 0.5)).abs() < 1e-15);
    assert_eq!(lr_at(130, &cfg), 1e-7);
    assert_eq!(lr_at(131, &cfg), 0.005);
    for e in 31..130 {
        assert!(lr_at(e, &cfg) < lr_at(e - 1, &cfg));
    }
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::FeMlp,
        n_channels: 1,
        graph: ModelGraph::grid(2, 2),
        mlp: MlpConfig {
            hidden: vec![8],
            dropout: 0.0,
        },
        ..ModelConfig::default()
    }
}

/// Windows whose label is a fixed linear function of their mean level.
fn toy_windows(n: usize, seed: u64) -> Vec<WindowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let level: f64 = rng.gen_range(0.0..1.0);
            let tensor = Tensor::from_fn(vec![4, 1, 32], |_| level + 0.1 * rng.gen_range(-1.0..1.0));
            WindowSample {
                start_time: i as f64 * 5.0,
                tensor,
                label: [2.0 * level, 1.0 - level, 0.5, 0.0],
            }
        })
        .collect()
}

fn short_schedule(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        warmup_epochs: 1,
        cycle_epochs: 50,
        batch: 16,
        shard: 8,
        peak_lr: 0.01,
        augment: false,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_on_a_learnable_target_falls_every_epoch_at_first() {
    let (train, val) = (toy_windows(128, 1), toy_windows(32, 2));
    let model = Model::new(toy_config(), 3).unwrap();
    let out = fit(model, &train, &val, &short_schedule(5), 0.0, 4).unwrap();
    let losses: Vec<f64> = out.report.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn same_seed_same_curve() {
    let (train, val) = (toy_windows(64, 1), toy_windows(16, 2));
    let run = || {
        let m = Model::new(toy_config(), 3).unwrap();
        let out = fit(m, &train, &val, &short_schedule(3), 0.01, 9).unwrap();
        (out.report.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>(), out.model.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_patience_stops_at_the_first_epoch_without_improvement() {
    let (train, val) = (toy_windows(64, 1), toy_windows(16, 2));
    let cfg = TrainConfig {
        patience: 0,
        peak_lr: 0.2,
        ..short_schedule(40)
    };
    let out = fit(Model::new(toy_config(), 3).unwrap(), &train, &val, &cfg, 0.0, 1).unwrap();
    let r = &out.report;
    assert_eq!(r.stop_reason, StopReason::EarlyStopping { patience: 0 });
    let vals: Vec<f64> = r.epochs.iter().map(|e| e.val_loss).collect();
    let last = vals.len() - 1;
    assert!(vals[last] >= vals[last - 1]);
    assert!(vals[..last].windows(2).all(|w| w[1] < w[0]));
    assert_eq!(r.best_epoch, Some(last - 1));
}

#[test]
fn divergence_keeps_the_last_finite_checkpoint() {
    let (train, val) = (toy_windows(64, 1), toy_windows(16, 2));
    let cfg = TrainConfig {
        peak_lr: 1e12,
        clip_norm: 1e300,
        weight_decay: 0.0,
        ..short_schedule(30)
    };
    let out = fit(Model::new(toy_config(), 3).unwrap(), &train, &val, &cfg, 0.0, 1).unwrap();
    assert!(matches!(out.report.stop_reason, StopReason::Diverged { .. }), "{:?}", out.report.stop_reason);
    assert!(out.model.params.tensors().iter().all(|t| t.data().iter().all(|v| v.is_finite())));
}

#[test]
fn empty_partitions_are_rejected() {
    let val = toy_windows(4, 2);
    let m = Model::new(toy_config(), 3).unwrap();
    assert!(matches!(
        fit(m, &[], &val, &short_schedule(1), 0.0, 0),
        Err(bridgeflow::Error::EmptyPartition(_))
    ));
}
