//! Finite-difference probe of complete models, shared by test targets.

use bridgeflow::nets::{CnnConfig, GatConfig, HeadConfig, MlpConfig, Model, ModelConfig, Pass, Variant};
use bridgeflow::tensor::{GradCheck, Tensor};
use bridgeflow::{ModelGraph, WindowSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEPS: usize = 16;

pub const TOLERANCE: f64 = 1e-4;

/// GATv2 scores pass through LeakyReLU, so a probe can straddle its kink.
pub const PROBE: GradCheck = GradCheck {
    step: 1e-5,
    floor: 1e-6,
    coords_per_input: None,
    refine_above: Some(TOLERANCE),
};

pub fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        n_channels: 2,
        graph: ModelGraph::grid(2, 2),
        cnn: CnnConfig {
            filters: vec![2, 3],
            kernel: 3,
            stride: 2,
        },
        gat: GatConfig {
            heads: 2,
            layers: 2,
            head_dim: 3,
            negative_slope: 0.2,
        },
        head: HeadConfig { hidden: 4 },
        mlp: MlpConfig {
            hidden: vec![5],
            dropout: 0.2,
        },
    }
}

pub fn windows(cfg: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<WindowSample> {
    (0..n)
        .map(|i| WindowSample {
            start_time: i as f64,
            tensor: Tensor::from_fn(&[cfg.n_nodes(), cfg.n_channels, STEPS], |_| rng.gen_range(-1.0..1.0)),
            label: [0.0; 4],
        })
        .collect()
}

/// Max relative error of `Σ w ⊙ model(x)` over all parameters.
pub fn model_check(variant: Variant, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny(variant);
    let mut model = Model::new(cfg.clone(), seed).unwrap();
    let batch = windows(&cfg, 3, &mut rng);
    let refs: Vec<&WindowSample> = batch.iter().collect();
    model.fit_feature_norm(&refs).unwrap();
    let input = model.prepare(&refs).unwrap();
    let weights = Tensor::from_fn(&[3, 4], |_| rng.gen_range(-1.0..1.0));
    let report = PROBE
        .run(
            model.params.tensors(),
            |tape, vars| {
                let y = model.forward(tape, vars, &input, 3, Pass::Eval).map_err(|e| match e {
                    bridgeflow::Error::Tensor(t) => t,
                    e => panic!("{e}"),
                })?;
                y.mul(tape.constant(weights.clone()))?.sum_all()
            },
            &mut rng,
        )
        .unwrap();
    report.max_rel_err
}
