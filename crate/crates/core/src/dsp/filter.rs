//! Butterworth low-pass design via the bilinear transform, and causal IIR
//! filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer function `B(z)/A(z)` with `a[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl FilterCoefficients {
    /// Complex gain at `freq` Hz for sampling rate `rate`.
    pub fn response(&self, freq: f64, rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq / rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        let eval = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z_inv + v)
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Roots of `A(z)` via the companion polynomial; used to check stability.
    pub fn poles(&self) -> Vec<Complex64> {
        // Durand-Kerner on z^n + a1 z^(n-1) + ... + an.
        let n = self.a.len() - 1;
        if n == 0 {
            return Vec::new();
        }
        let seed = Complex64::new(0.4, 0.9);
        let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32)).collect();
        let poly = |z: Complex64| self.a.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
        for _ in 0..500 {
            let prev = roots.clone();
            for i in 0..n {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        denom *= roots[i] - roots[j];
                    }
                }
                let step = poly(roots[i]) / denom;
                roots[i] -= step;
            }
            let moved = roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if moved < 1e-15 {
                break;
            }
        }
        roots
    }
}

/// Digital low-pass Butterworth of the given order with unit DC gain.
///
/// The analog prototype's cutoff is prewarped so the digital −3 dB point
/// lands exactly on `cutoff`.
pub fn butterworth_design(order: usize, cutoff: f64, rate: f64) -> Result<FilterCoefficients> {
    let nyquist = rate / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(Error::InvalidCutoff { cutoff, nyquist });
    }
    if order == 0 {
        return Err(Error::config("preprocess.filter_order", "must be >= 1"));
    }
    let k = 2.0 * rate;
    let omega_c = k * (PI * cutoff / rate).tan();
    let n = order as f64;
    let z_poles: Vec<Complex64> = (1..=order)
        .map(|i| {
            let theta = PI * (2.0 * i as f64 + n - 1.0) / (2.0 * n);
            let s = Complex64::from_polar(omega_c, theta);
            (k + s) / (k - s)
        })
        .collect();

    // A(z) = Π (1 − p z⁻¹), expanded in powers of z⁻¹.
    let mut a = vec![Complex64::new(1.0, 0.0)];
    for p in &z_poles {
        let mut next = vec![Complex64::new(0.0, 0.0); a.len() + 1];
        for (i, c) in a.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * p;
        }
        a = next;
    }
    let a: Vec<f64> = a.iter().map(|c| c.re).collect();

    // B(z) = g (1 + z⁻¹)^n, g chosen for unit gain at z = 1.
    let mut b = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; b.len() + 1];
        for (i, c) in b.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c;
        }
        b = next;
    }
    let gain = a.iter().sum::<f64>() / b.iter().sum::<f64>();
    b.iter_mut().for_each(|v| *v *= gain);
    Ok(FilterCoefficients { b, a })
}

/// Causal filtering (direct form II transposed, zero initial state).
pub fn lfilter(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let FilterCoefficients { b, a } = coeffs;
    let n = b.len().max(a.len());
    let mut state = vec![0.0; n];
    x.iter()
        .map(|&xi| {
            let y = b[0] * xi + state[0];
            for i in 1..n {
                let bi = b.get(i).copied().unwrap_or(0.0);
                let ai = a.get(i).copied().unwrap_or(0.0);
                state[i - 1] = bi * xi - ai * y + state.get(i).copied().unwrap_or(0.0);
            }
            y
        })
        .collect()
}

pub fn butterworth_lowpass(samples: &[f64], rate: f64, cutoff: f64, order: usize) -> Result<Vec<f64>> {
    let coeffs = butterworth_design(order, cutoff, rate)?;
    Ok(lfilter(&coeffs, samples))
}
