use std::f64::consts::PI;

use bridgeflow_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub cycle_epochs: usize,
    pub min_lr: f64,
    pub clip_norm: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of the training span used for fitting; the rest validates.
    pub train_fraction: f64,
    /// Add Gaussian noise to training windows each epoch.
    pub augment: bool,
    /// Windows per gradient shard. Shards are reduced in a fixed order, so
    /// results do not depend on the worker count.
    pub shard: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            peak_lr: 0.005,
            warmup_epochs: 30,
            cycle_epochs: 100,
            min_lr: 1e-7,
            clip_norm: 5.0,
            batch: 256,
            max_epochs: 200,
            patience: 20,
            train_fraction: 0.8,
            augment: true,
            shard: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr > 0.0 && self.min_lr < self.peak_lr) {
            return Err(Error::config("train.min_lr", "need 0 < min_lr < peak_lr"));
        }
        if self.batch == 0 || self.shard == 0 {
            return Err(Error::config("train.batch", "batch and shard must be >= 1"));
        }
        if self.cycle_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::config("train.cycle_epochs", "cycle and max epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta1", "betas must lie in [0, 1)"));
        }
        if !(self.clip_norm > 0.0 && self.weight_decay >= 0.0 && self.eps > 0.0) {
            return Err(Error::config("train.clip_norm", "clip_norm and eps must be > 0, weight_decay >= 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train.train_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Learning rate for 0-based `epoch`.
///
/// Linear warmup reaching `peak_lr` at epoch `warmup_epochs`, then cosine
/// decay to `min_lr` over `cycle_epochs`, restarting at the peak afterwards.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.peak_lr * (epoch + 1) as f64 / w as f64;
    }
    let pos = (epoch - w) % (cfg.cycle_epochs + 1);
    let frac = pos as f64 / cfg.cycle_epochs as f64;
    cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * 0.5 * (1.0 + (PI * frac).cos())
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let f = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(f));
    }
    norm
}
