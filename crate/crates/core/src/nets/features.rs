use bridgeflow_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::WindowSample;

/// Per-channel statistics in feature order.
pub const STAT_NAMES: [&str; 8] = ["min", "max", "mean", "std", "kurtosis", "rms", "abs_sum", "energy"];
pub const N_STATS: usize = STAT_NAMES.len();

/// The eight summary statistics of one series.
///
/// `std` is the population deviation; `kurtosis` is `m4 / m2²` without the
/// excess correction and 0 for a constant series.
pub fn series_stats(x: &[f64]) -> [f64; N_STATS] {
    let n = x.len() as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut abs_sum, mut energy) = (0.0, 0.0, 0.0);
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        abs_sum += v.abs();
        energy += v * v;
    }
    let mean = sum / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };
    [lo, hi, mean, m2.sqrt(), kurtosis, (energy / n).sqrt(), abs_sum, energy]
}

/// Node features `[N, 8·C]`, channel-major.
pub fn fe_encode(sample: &WindowSample) -> Result<Tensor> {
    if sample.n_steps() < 4 {
        return Err(Error::ShapeMismatch(format!(
            "feature encoding needs at least 4 time steps, got {}",
            sample.n_steps()
        )));
    }
    let (n, c) = (sample.n_nodes(), sample.n_channels());
    let mut data = Vec::with_capacity(n * c * N_STATS);
    for node in 0..n {
        for ch in 0..c {
            data.extend_from_slice(&series_stats(sample.series(node, ch)));
        }
    }
    Ok(Tensor::new(vec![n, c * N_STATS], data)?)
}

/// Per-column affine standardization fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Column means and deviations of row-stacked features `[R, F]`.
    /// Columns with no spread keep unit scale.
    pub fn fit(features: &Tensor) -> Self {
        let (r, f) = (features.rows(), features.row_len());
        let mut mean = vec![0.0; f];
        for i in 0..r {
            for (m, v) in mean.iter_mut().zip(features.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= r.max(1) as f64);
        let mut var = vec![0.0; f];
        for i in 0..r {
            for ((s, v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / r.max(1) as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &mut Tensor) -> Result<()> {
        let f = features.row_len();
        if f != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature width {f} vs normalizer width {}",
                self.mean.len()
            )));
        }
        for (i, v) in features.data_mut().iter_mut().enumerate() {
            let j = i % f;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(())
    }
}
