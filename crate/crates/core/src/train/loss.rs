use bridgeflow_tensor::{Tensor, Var};

use crate::error::{Error, Result};
use crate::types::{CategoryCounts, NUM_CATEGORIES};

fn check(y: &[CategoryCounts], y_hat: &[CategoryCounts]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(Error::Invalid("loss over an empty batch".into()));
    }
    Ok(())
}

/// Mean of squared errors over batch and categories.
pub fn mse_loss(y: &[CategoryCounts], y_hat: &[CategoryCounts]) -> Result<f64> {
    check(y, y_hat)?;
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)))
        .sum();
    Ok(s / (y.len() * NUM_CATEGORIES) as f64)
}

/// Mean of absolute errors over batch and categories.
pub fn mae_loss(y: &[CategoryCounts], y_hat: &[CategoryCounts]) -> Result<f64> {
    check(y, y_hat)?;
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .sum();
    Ok(s / (y.len() * NUM_CATEGORIES) as f64)
}

/// Per-category mean squared error.
pub fn mse_per_category(y: &[CategoryCounts], y_hat: &[CategoryCounts]) -> Result<CategoryCounts> {
    check(y, y_hat)?;
    let mut out = [0.0; NUM_CATEGORIES];
    for (a, b) in y.iter().zip(y_hat) {
        for k in 0..NUM_CATEGORIES {
            out[k] += (a[k] - b[k]) * (a[k] - b[k]);
        }
    }
    Ok(out.map(|v| v / y.len() as f64))
}

/// Learned per-task log-variances `s_k = log σ_k²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyState {
    pub s: CategoryCounts,
}

impl Default for UncertaintyState {
    fn default() -> Self {
        Self {
            s: [0.0; NUM_CATEGORIES],
        }
    }
}

/// `Σ_k ½·exp(−s_k)·MSE_k + s_k` evaluated directly.
pub fn uncertainty_loss(y: &[CategoryCounts], y_hat: &[CategoryCounts], state: &UncertaintyState) -> Result<f64> {
    let m = mse_per_category(y, y_hat)?;
    Ok((0..NUM_CATEGORIES)
        .map(|k| 0.5 * (-state.s[k]).exp() * m[k] + state.s[k])
        .sum())
}

/// Differentiable uncertainty-weighted loss for one shard of a batch.
///
/// `y_hat` and `y` are `[b, K]` rows of a batch of `total` windows; `s` is
/// `[K]`. Summing the shard losses of a batch gives the full-batch loss.
pub fn uncertainty_loss_shard<'t>(y_hat: Var<'t>, y: &Tensor, s: Var<'t>, total: usize) -> Result<Var<'t>> {
    let tape = y_hat.tape();
    let b = y_hat.shape()[0];
    let target = tape.constant(y.clone());
    let m = y_hat.sub(target)?.square()?.sum_axis(0)?.scale(1.0 / total as f64)?;
    let weighted = m.mul(s.scale(-1.0)?.exp()?)?.scale(0.5)?.sum_all()?;
    let reg = s.sum_all()?.scale(b as f64 / total as f64)?;
    Ok(weighted.add(reg)?)
}
