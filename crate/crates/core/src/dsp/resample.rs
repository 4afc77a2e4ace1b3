//! Polyphase rational-rate resampling with a Kaiser-windowed sinc prototype.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::SignalRecord;

const KAISER_BETA: f64 = 5.0;
const TAPS_PER_PHASE: usize = 64;
const MAX_DENOMINATOR: u64 = 1000;

/// Best rational approximation `p/q` of `x` with `q <= max_den`, accepted
/// only if it reproduces `x` to 1e-9 relative.
pub fn rational_ratio(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut v = x;
    let mut best = None;
    for _ in 0..64 {
        let a = v.floor();
        let a_u = a as u64;
        let h2 = a_u.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a_u.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        best = Some((h2, k2));
        if ((h2 as f64 / k2 as f64) - x).abs() <= 1e-9 * x {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = v - a;
        if frac < 1e-12 {
            break;
        }
        v = 1.0 / frac;
    }
    best.filter(|&(p, q)| ((p as f64 / q as f64) - x).abs() <= 1e-9 * x)
}

fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term) = (1.0, 1.0);
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Low-pass prototype for upsampling by `up` and decimating by `down`.
/// Gain `up` in the passband so the interpolated signal keeps its amplitude.
fn prototype(up: usize, down: usize) -> Vec<f64> {
    let n = TAPS_PER_PHASE * up + 1;
    let centre = (n - 1) as f64 / 2.0;
    // Cutoff as a fraction of the upsampled Nyquist.
    let fc = 0.8 / up.max(down) as f64;
    let norm = bessel_i0(KAISER_BETA);
    (0..n)
        .map(|i| {
            let t = i as f64 - centre;
            let r = t / centre;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            up as f64 * fc * sinc(fc * t) * w
        })
        .collect()
}

/// Resample `x` by the rational factor `up/down`.
///
/// The output is aligned with the input (group delay removed) and has
/// `ceil(n * up / down)` samples.
pub fn resample_poly(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    if up == down {
        return x.to_vec();
    }
    let h = prototype(up, down);
    let delay = (h.len() - 1) / 2;
    let n_out = (x.len() * up).div_ceil(down);
    let n_up = x.len() * up;
    (0..n_out)
        .map(|m| {
            // y[m] = Σ_k h[k] · u[m·down + delay − k], u the zero-stuffed input
            let centre = m * down + delay;
            let k_min = centre.saturating_sub(n_up - 1);
            let k_max = centre.min(h.len() - 1);
            let mut acc = 0.0;
            // only taps landing on non-zero samples: (centre − k) % up == 0
            let mut k = k_min + (centre - k_min) % up;
            while k <= k_max {
                acc += h[k] * x[(centre - k) / up];
                k += up;
            }
            acc
        })
        .collect()
}

/// Resample a record to `target_rate` Hz.
pub fn resample(record: &SignalRecord, target_rate: f64) -> Result<SignalRecord> {
    let from = record.sample_rate;
    if !(target_rate > 0.0 && target_rate <= from) {
        return Err(Error::config(
            "preprocess.target_rate",
            format!("{target_rate} Hz must be positive and not above the source rate {from} Hz"),
        ));
    }
    let (up, down) = rational_ratio(target_rate / from, MAX_DENOMINATOR)
        .ok_or(Error::IrrationalRatio { from, to: target_rate })?;
    let samples = resample_poly(&record.samples, up as usize, down as usize);
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("resample"));
    }
    Ok(SignalRecord {
        sample_rate: target_rate,
        samples,
        ..record.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SensorModality;

    fn rec(rate: f64, samples: Vec<f64>) -> SignalRecord {
        SignalRecord {
            sensor_id: 1,
            modality: SensorModality::Acceleration,
            sample_rate: rate,
            t0: 0.0,
            samples,
        }
    }

    #[test]
    fn ratios() {
        assert_eq!(rational_ratio(0.4, 1000), Some((2, 5)));
        assert_eq!(rational_ratio(1.0, 1000), Some((1, 1)));
        assert_eq!(rational_ratio(100.0 / 256.0, 1000), Some((25, 64)));
        assert_eq!(rational_ratio(std::f64::consts::FRAC_1_SQRT_2, 1000), None);
    }

    #[test]
    fn sample_count_250_to_100() {
        let out = resample(&rec(250.0, vec![0.0; 2500]), 100.0).unwrap();
        assert_eq!(out.samples.len(), 1000);
        assert_eq!(out.sample_rate, 100.0);
    }

    #[test]
    fn identity_rate_is_exact_copy() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let out = resample(&rec(100.0, x.clone()), 100.0).unwrap();
        assert_eq!(out.samples, x);
    }

    #[test]
    fn irrational_ratio_rejected() {
        let r = resample(&rec(100.0 * std::f64::consts::PI, vec![0.0; 10]), 100.0);
        assert!(matches!(r, Err(Error::IrrationalRatio { .. })));
    }

    #[test]
    fn upsampling_target_rejected() {
        assert!(resample(&rec(100.0, vec![0.0; 10]), 250.0).is_err());
    }

    #[test]
    fn sine_amplitude_preserved() {
        let x: Vec<f64> = (0..2500).map(|i| (2.0 * PI * i as f64 / 250.0).sin()).collect();
        let y = resample(&rec(250.0, x), 100.0).unwrap().samples;
        // skip the filter edge transients
        for (i, v) in y.iter().enumerate().take(900).skip(100) {
            let expected = (2.0 * PI * i as f64 / 100.0).sin();
            assert!((v - expected).abs() < 0.01, "i = {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn aliasing_band_attenuated() {
        // 70 Hz would alias to 30 Hz at a 100 Hz output rate
        let x: Vec<f64> = (0..5000).map(|i| (2.0 * PI * 70.0 * i as f64 / 250.0).sin()).collect();
        let y = resample(&rec(250.0, x), 100.0).unwrap().samples;
        let peak = y[200..1800].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 0.01, "{peak}");
    }
}
