//! Signal preprocessing: resampling, detrending, drift removal, low-pass
//! filtering, normalization, windowing and training-noise augmentation.

mod drift;
mod filter;
mod resample;

use std::fmt;

use bridgeflow_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SensorModality, SignalRecord, WindowSample};

pub use drift::{detrend_linear, ewma_drift, remove_drift};
pub use filter::{butterworth_design, butterworth_lowpass, lfilter, FilterCoefficients};
pub use resample::{rational_ratio, resample, resample_poly};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Hz
    pub target_rate: f64,
    /// EWMA smoothing factor for strain drift.
    pub alpha: f64,
    /// Butterworth cutoff, Hz.
    pub cutoff: f64,
    pub filter_order: usize,
    /// Global normalization constants, fixed across the whole dataset.
    pub y_max_accel: f64,
    pub y_max_strain: f64,
    /// seconds
    pub window: f64,
    pub stride_train: f64,
    pub stride_test: f64,
    /// Variance of the Gaussian noise added to normalized training windows.
    pub augment_variance: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_rate: 100.0,
            alpha: 0.1,
            cutoff: 2.5,
            filter_order: 2,
            y_max_accel: DEFAULT_Y_MAX_ACCEL,
            y_max_strain: DEFAULT_Y_MAX_STRAIN,
            window: 5.0,
            stride_train: 2.5,
            stride_test: 5.0,
            augment_variance: 0.04,
        }
    }
}

/// Scales measured on the default synthetic scenario with
/// [`calibrate_scale`] (seed 0, 2 h).
pub const DEFAULT_Y_MAX_ACCEL: f64 = 0.402_750_719_301_529_6;
pub const DEFAULT_Y_MAX_STRAIN: f64 = 7.504_690_886_529_882;

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("preprocess.{key}"), format!("must be > 0, got {v}")))
            }
        };
        pos("target_rate", self.target_rate)?;
        pos("y_max_accel", self.y_max_accel)?;
        pos("y_max_strain", self.y_max_strain)?;
        pos("window", self.window)?;
        pos("stride_train", self.stride_train)?;
        pos("stride_test", self.stride_test)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("preprocess.alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.target_rate / 2.0) {
            return Err(Error::config(
                "preprocess.cutoff",
                format!("must lie in (0, {}) Hz, got {}", self.target_rate / 2.0, self.cutoff),
            ));
        }
        if self.filter_order == 0 {
            return Err(Error::config("preprocess.filter_order", "must be >= 1"));
        }
        if !(self.augment_variance >= 0.0 && self.augment_variance.is_finite()) {
            return Err(Error::config("preprocess.augment_variance", "must be >= 0"));
        }
        let steps = self.window * self.target_rate;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config("preprocess.window", "window must span a whole number of samples"));
        }
        Ok(())
    }

    pub fn y_max(&self, modality: SensorModality) -> f64 {
        match modality {
            SensorModality::Acceleration => self.y_max_accel,
            SensorModality::Strain => self.y_max_strain,
        }
    }

    pub fn stride(&self, mode: WindowMode) -> f64 {
        match mode {
            WindowMode::Train => self.stride_train,
            WindowMode::Test => self.stride_test,
        }
    }

    pub fn window_steps(&self) -> usize {
        (self.window * self.target_rate).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Train,
    Test,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(WindowMode::Train),
            "test" => Ok(WindowMode::Test),
            other => Err(Error::config("mode", format!("expected train or test, got {other:?}"))),
        }
    }
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Train => "train",
            WindowMode::Test => "test",
        })
    }
}

pub fn normalize(x: &[f64], y_max: f64) -> Result<Vec<f64>> {
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::NonPositiveScale(y_max));
    }
    Ok(x.iter().map(|v| v / y_max).collect())
}

/// One step of the per-channel chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Resample { to: f64 },
    Detrend,
    RemoveDrift { alpha: f64 },
    Lowpass { cutoff: f64, order: usize },
    Normalize { y_max: f64 },
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Resample { to } => write!(f, "resample({to} Hz)"),
            Stage::Detrend => f.write_str("detrend"),
            Stage::RemoveDrift { alpha } => write!(f, "remove_drift(alpha={alpha})"),
            Stage::Lowpass { cutoff, order } => write!(f, "butterworth(order={order}, fc={cutoff} Hz)"),
            Stage::Normalize { y_max } => write!(f, "normalize(y_max={y_max})"),
        }
    }
}

/// The ordered stages applied to a channel of the given modality.
///
/// Acceleration: resample, detrend, normalize. Strain: detrend, drift
/// removal, low-pass, normalize (resampled first only if its rate differs
/// from the target).
pub fn stage_plan(modality: SensorModality, source_rate: f64, cfg: &PreprocessConfig) -> Vec<Stage> {
    let mut plan = Vec::new();
    let needs_resample = source_rate != cfg.target_rate;
    match modality {
        SensorModality::Acceleration => {
            plan.push(Stage::Resample { to: cfg.target_rate });
            plan.push(Stage::Detrend);
        }
        SensorModality::Strain => {
            if needs_resample {
                plan.push(Stage::Resample { to: cfg.target_rate });
            }
            plan.push(Stage::Detrend);
            plan.push(Stage::RemoveDrift { alpha: cfg.alpha });
            plan.push(Stage::Lowpass {
                cutoff: cfg.cutoff,
                order: cfg.filter_order,
            });
        }
    }
    plan.push(Stage::Normalize {
        y_max: cfg.y_max(modality),
    });
    plan
}

fn apply_stage(record: SignalRecord, stage: Stage) -> Result<SignalRecord> {
    let out = match stage {
        Stage::Resample { to } => return resample(&record, to),
        Stage::Detrend => detrend_linear(&record.samples),
        Stage::RemoveDrift { alpha } => remove_drift(&record.samples, alpha),
        Stage::Lowpass { cutoff, order } => butterworth_lowpass(&record.samples, record.sample_rate, cutoff, order)?,
        Stage::Normalize { y_max } => normalize(&record.samples, y_max)?,
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("preprocess stage output"));
    }
    Ok(SignalRecord { samples: out, ..record })
}

/// Run the modality's stage chain, returning the processed record and the
/// stages actually applied.
pub fn preprocess_channel_logged(record: &SignalRecord, cfg: &PreprocessConfig) -> Result<(SignalRecord, Vec<Stage>)> {
    if record.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw signal"));
    }
    let plan = stage_plan(record.modality, record.sample_rate, cfg);
    let mut cur = record.clone();
    for &stage in &plan {
        cur = apply_stage(cur, stage)?;
    }
    Ok((cur, plan))
}

pub fn preprocess_channel(record: &SignalRecord, cfg: &PreprocessConfig) -> Result<SignalRecord> {
    preprocess_channel_logged(record, cfg).map(|(r, _)| r)
}

/// Maximum absolute amplitude of the preprocessed signal before
/// normalization, over all given records. Used to fix `y_max` once.
pub fn calibrate_scale(records: &[SignalRecord], cfg: &PreprocessConfig) -> Result<f64> {
    let unit = PreprocessConfig {
        y_max_accel: 1.0,
        y_max_strain: 1.0,
        ..cfg.clone()
    };
    let mut peak = 0.0f64;
    for r in records {
        let p = preprocess_channel(r, &unit)?;
        peak = p.samples.iter().fold(peak, |m, v| m.max(v.abs()));
    }
    if peak > 0.0 {
        Ok(peak)
    } else {
        Err(Error::NonPositiveScale(peak))
    }
}

/// Cut aligned channels into fixed-length windows.
///
/// `channels[node][c]` is channel `c` of graph node `node`; every record
/// must share rate and start time. Samples beyond the last full window
/// are dropped. Labels are zero and filled in later.
pub fn window_segments(
    channels: &[Vec<SignalRecord>],
    cfg: &PreprocessConfig,
    mode: WindowMode,
) -> Result<Vec<WindowSample>> {
    let first = channels
        .first()
        .and_then(|n| n.first())
        .ok_or_else(|| Error::MisalignedChannels("no channels".into()))?;
    let n_nodes = channels.len();
    let n_ch = channels[0].len();
    let rate = first.sample_rate;
    let mut len = usize::MAX;
    for (i, node) in channels.iter().enumerate() {
        if node.len() != n_ch {
            return Err(Error::MisalignedChannels(format!(
                "node {i} has {} channels, node 0 has {n_ch}",
                node.len()
            )));
        }
        for r in node {
            if r.sample_rate != rate || (r.t0 - first.t0).abs() > 1e-9 {
                return Err(Error::MisalignedChannels(format!(
                    "sensor {} at {} Hz from t0 = {} does not match {} Hz from t0 = {}",
                    r.sensor_id, r.sample_rate, r.t0, rate, first.t0
                )));
            }
            len = len.min(r.samples.len());
        }
    }
    if channels.iter().flatten().any(|r| r.samples.len() != len) {
        return Err(Error::MisalignedChannels("records differ in length".into()));
    }
    let win = (cfg.window * rate).round() as usize;
    let stride = (cfg.stride(mode) * rate).round() as usize;
    if win == 0 || stride == 0 {
        return Err(Error::config("preprocess.window", "window and stride must span at least one sample"));
    }
    if len < win {
        return Ok(Vec::new());
    }
    let count = (len - win) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let s = w * stride;
        let mut data = Vec::with_capacity(n_nodes * n_ch * win);
        for node in channels {
            for r in node {
                data.extend_from_slice(&r.samples[s..s + win]);
            }
        }
        out.push(WindowSample {
            start_time: first.t0 + s as f64 / rate,
            tensor: Tensor::new(vec![n_nodes, n_ch, win], data)?,
            label: [0.0; 4],
        });
    }
    Ok(out)
}

/// Add i.i.d. `N(0, variance)` noise to the window tensor; the label is
/// left untouched.
pub fn augment_gaussian(sample: &WindowSample, variance: f64, seed: u64) -> Result<WindowSample> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::config("preprocess.augment_variance", "must be >= 0"));
    }
    let mut out = sample.clone();
    if variance == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Invalid(e.to_string()))?;
    for v in out.tensor.data_mut() {
        *v += noise.sample(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u32, modality: SensorModality, rate: f64, samples: Vec<f64>) -> SignalRecord {
        SignalRecord {
            sensor_id: id,
            modality,
            sample_rate: rate,
            t0: 100.0,
            samples,
        }
    }

    #[test]
    fn default_config_is_valid() {
        PreprocessConfig::default().validate().unwrap();
        assert_eq!(PreprocessConfig::default().window_steps(), 500);
    }

    #[test]
    fn stage_order_by_modality() {
        let cfg = PreprocessConfig::default();
        let (_, log) = preprocess_channel_logged(&rec(1, SensorModality::Acceleration, 250.0, vec![0.0; 500]), &cfg).unwrap();
        assert_eq!(
            log.iter().map(|s| s.to_string().split('(').next().unwrap().to_owned()).collect::<Vec<_>>(),
            ["resample", "detrend", "normalize"]
        );
        let (_, log) = preprocess_channel_logged(&rec(1, SensorModality::Strain, 100.0, vec![0.0; 500]), &cfg).unwrap();
        assert_eq!(
            log.iter().map(|s| s.to_string().split('(').next().unwrap().to_owned()).collect::<Vec<_>>(),
            ["detrend", "remove_drift", "butterworth", "normalize"]
        );
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = PreprocessConfig::default();
        for (m, rate) in [(SensorModality::Acceleration, 250.0), (SensorModality::Strain, 100.0)] {
            let out = preprocess_channel(&rec(1, m, rate, vec![0.0; 1000]), &cfg).unwrap();
            assert!(out.samples.iter().all(|&v| v == 0.0));
            assert_eq!(out.sample_rate, 100.0);
        }
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut x = vec![0.0; 100];
        x[3] = f64::NAN;
        assert!(matches!(
            preprocess_channel(&rec(1, SensorModality::Strain, 100.0, x), &PreprocessConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize(&[1.0, -2.0], 1.0).unwrap(), vec![1.0, -2.0]);
        assert_eq!(normalize(&[3.0, 3.0], 3.0).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(normalize(&[1.0], 0.0), Err(Error::NonPositiveScale(_))));
        let x = [0.1, -7.3, 1e3];
        let back: Vec<f64> = normalize(&x, 2.7).unwrap().iter().map(|v| v * 2.7).collect();
        for (a, b) in x.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn aligned(n_nodes: usize, secs: f64) -> Vec<Vec<SignalRecord>> {
        (0..n_nodes)
            .map(|i| {
                let n = (secs * 100.0) as usize;
                vec![rec(i as u32 + 1, SensorModality::Strain, 100.0, (0..n).map(|t| (i * 100_000 + t) as f64).collect())]
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        let cfg = PreprocessConfig::default();
        let ch = aligned(8, 60.0);
        assert_eq!(window_segments(&ch, &cfg, WindowMode::Train).unwrap().len(), 23);
        let test = window_segments(&ch, &cfg, WindowMode::Test).unwrap();
        assert_eq!(test.len(), 12);
        assert_eq!(test[0].tensor.shape(), &[8, 1, 500]);
        assert_eq!(test[1].start_time, 105.0);
    }

    #[test]
    fn test_windows_tile_the_source() {
        let cfg = PreprocessConfig::default();
        let ch = aligned(3, 17.3);
        let w = window_segments(&ch, &cfg, WindowMode::Test).unwrap();
        for node in 0..3 {
            let joined: Vec<f64> = w.iter().flat_map(|s| s.series(node, 0).to_vec()).collect();
            assert_eq!(joined, ch[node][0].samples[..joined.len()]);
            assert_eq!(joined.len(), 1500);
        }
    }

    #[test]
    fn misaligned_rejected() {
        let mut ch = aligned(2, 10.0);
        ch[1][0].t0 += 0.5;
        assert!(matches!(
            window_segments(&ch, &PreprocessConfig::default(), WindowMode::Test),
            Err(Error::MisalignedChannels(_))
        ));
    }

    #[test]
    fn augment_identity_and_labels() {
        let s = WindowSample {
            start_time: 0.0,
            tensor: Tensor::zeros(vec![2, 1, 500]),
            label: [0.5, 0.0, 1.25, 0.0],
        };
        assert_eq!(augment_gaussian(&s, 0.0, 1).unwrap(), s);
        let a = augment_gaussian(&s, 0.04, 1).unwrap();
        assert_eq!(a.label, s.label);
        assert_eq!(a, augment_gaussian(&s, 0.04, 1).unwrap());
        assert_ne!(a, augment_gaussian(&s, 0.04, 2).unwrap());
    }
}
