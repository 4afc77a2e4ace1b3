//! Trend and drift removal.

/// Subtract the least-squares line through `(i, x[i])`.
pub fn detrend_linear(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    x.iter()
        .enumerate()
        .map(|(i, &v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect()
}

/// Average of a forward and a backward exponentially weighted mean.
///
/// The forward pass starts at `x[0]`, the backward pass at `x[n-1]`. Running
/// both directions cancels the phase lag of either alone.
pub fn ewma_drift(x: &[f64], alpha: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut fwd = vec![0.0; n];
    fwd[0] = x[0];
    for t in 1..n {
        fwd[t] = alpha * x[t] + (1.0 - alpha) * fwd[t - 1];
    }
    let mut out = vec![0.0; n];
    let mut back = x[n - 1];
    out[n - 1] = 0.5 * (fwd[n - 1] + back);
    for t in (0..n - 1).rev() {
        back = alpha * x[t] + (1.0 - alpha) * back;
        out[t] = 0.5 * (fwd[t] + back);
    }
    out
}

pub fn remove_drift(x: &[f64], alpha: f64) -> Vec<f64> {
    let d = ewma_drift(x, alpha);
    x.iter().zip(d).map(|(v, d)| v - d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_annihilated() {
        let x: Vec<f64> = (0..200).map(|i| 3.0 + 2.0 * i as f64 * 0.01).collect();
        assert!(detrend_linear(&x).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn line_plus_sine_recovers_centred_sine() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 100.0).sin()).collect();
        let x: Vec<f64> = s.iter().enumerate().map(|(i, v)| v + 1.5 - 0.003 * i as f64).collect();
        let r = detrend_linear(&x);
        // oracle: detrending is linear and kills the line, so r = detrend(s)
        let expected = detrend_linear(&s);
        let rms = (r.iter().zip(&expected).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rms < 1e-9);
    }

    #[test]
    fn constant_is_fixed_point_of_drift() {
        let d = ewma_drift(&[7.3; 50], 0.1);
        assert!(d.iter().all(|v| (v - 7.3).abs() < 1e-12));
        assert!(remove_drift(&[7.3; 50], 0.1).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn single_sample() {
        assert_eq!(ewma_drift(&[4.2], 0.1), vec![4.2]);
    }

    #[test]
    fn symmetric_pulse_keeps_its_peak() {
        let n = 401;
        let c = 200.0;
        let x: Vec<f64> = (0..n).map(|i| (-((i as f64 - c) / 15.0).powi(2)).exp()).collect();
        let d = ewma_drift(&x, 0.1);
        let argmax = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 200);
        // the backward pass on x is the forward pass on mirrored x
        let mirrored: Vec<f64> = x.iter().rev().copied().collect();
        let dm = ewma_drift(&mirrored, 0.1);
        for i in 0..n {
            assert!((d[i] - dm[n - 1 - i]).abs() < 1e-12);
        }
    }
}
