//! Peak-detection counting on normalized strain, with per-lane amplitude
//! thresholds fitted against labeled hours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{hourly_truth, HourlySeries, HOUR};
use crate::types::{category_index, LaneId, SignalRecord, VehicleClass, VehicleEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    pub amplitude: f64,
}

/// Amplitude intervals of one lane. Light is `[light.0, light.1)`, heavy is
/// `[heavy.0, heavy.1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneThresholds {
    pub light: [f64; 2],
    pub heavy: [f64; 2],
    pub sensors: Vec<u32>,
}

impl LaneThresholds {
    /// Light/heavy boundary.
    pub fn boundary(&self) -> f64 {
        self.heavy[0]
    }

    pub fn with_boundary(&self, b: f64) -> Self {
        Self {
            light: [self.light[0], b],
            heavy: [b, self.heavy[1]],
            sensors: self.sensors.clone(),
        }
    }

    pub fn class_of(&self, amplitude: f64) -> Option<VehicleClass> {
        if amplitude >= self.heavy[0] && amplitude <= self.heavy[1] {
            Some(VehicleClass::Heavy)
        } else if amplitude >= self.light[0] && amplitude < self.light[1] {
            Some(VehicleClass::Light)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakConfig {
    /// seconds
    pub min_distance: f64,
    pub left: LaneThresholds,
    pub right: LaneThresholds,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            min_distance: 0.1,
            left: LaneThresholds {
                light: [0.04, 0.4],
                heavy: [0.4, 1.0],
                sensors: vec![1, 2, 3, 4],
            },
            right: LaneThresholds {
                light: [0.035, 0.1],
                heavy: [0.1, 1.0],
                sensors: vec![5, 6, 7, 8],
            },
        }
    }
}

impl PeakConfig {
    pub fn lane(&self, lane: LaneId) -> &LaneThresholds {
        match lane {
            LaneId::LeftOvertaking => &self.left,
            LaneId::RightSlow => &self.right,
        }
    }

    pub fn lane_mut(&mut self, lane: LaneId) -> &mut LaneThresholds {
        match lane {
            LaneId::LeftOvertaking => &mut self.left,
            LaneId::RightSlow => &mut self.right,
        }
    }

    /// Smallest and largest amplitude counted on any lane.
    pub fn amplitude_range(&self) -> (f64, f64) {
        (
            self.left.light[0].min(self.right.light[0]),
            self.left.heavy[1].max(self.right.heavy[1]),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return Err(Error::config("baseline.min_distance", "must be finite and >= 0"));
        }
        for lane in LaneId::ALL {
            let t = self.lane(lane);
            let key = format!("baseline.{}", lane.as_str());
            if !(t.light[0] < t.light[1] && t.heavy[0] < t.heavy[1]) {
                return Err(Error::config(key, "amplitude intervals must be non-empty"));
            }
            if t.light[1] != t.heavy[0] {
                return Err(Error::config(key, "light and heavy intervals must be adjacent"));
            }
            if t.light[0] < 0.0 {
                return Err(Error::config(key, "amplitudes must be >= 0"));
            }
            if t.sensors.is_empty() {
                return Err(Error::config(format!("baseline.{}.sensors", lane.as_str()), "needs at least one sensor"));
            }
        }
        Ok(())
    }
}

/// Local maxima with amplitude in the configured union of ranges, thinned
/// so that kept peaks are at least `min_distance` apart, higher first.
pub fn detect_peaks(signal: &[f64], rate: f64, config: &PeakConfig) -> Vec<Peak> {
    let (lo, hi) = config.amplitude_range();
    detect_peaks_in(signal, rate, config.min_distance, lo, hi)
}

fn detect_peaks_in(signal: &[f64], rate: f64, min_distance: f64, lo: f64, hi: f64) -> Vec<Peak> {
    let n = signal.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if signal[i] > signal[i - 1] {
            // Walk across a plateau; its peak sits at the plateau midpoint.
            let mut j = i;
            while j + 1 < n && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < n && signal[j + 1] < signal[i] {
                let v = signal[i];
                if v >= lo && v <= hi {
                    candidates.push((i + j) / 2);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let dist = (min_distance * rate).ceil() as usize;
    let mut keep = vec![true; candidates.len()];
    if dist > 1 {
        let mut priority: Vec<usize> = (0..candidates.len()).collect();
        priority.sort_by(|&a, &b| signal[candidates[b]].total_cmp(&signal[candidates[a]]).then(a.cmp(&b)));
        for &p in &priority {
            if !keep[p] {
                continue;
            }
            let c = candidates[p];
            let mut k = p;
            while k > 0 && c - candidates[k - 1] < dist {
                k -= 1;
                keep[k] = false;
            }
            let mut k = p + 1;
            while k < candidates.len() && candidates[k] - c < dist {
                keep[k] = false;
                k += 1;
            }
        }
    }
    candidates
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&c, _)| Peak {
            time: c as f64 / rate,
            amplitude: signal[c],
        })
        .collect()
}

/// `[light, heavy]` counts of the peaks on `lane`; peaks outside both
/// intervals are ignored.
pub fn classify_counts(peaks: &[Peak], config: &PeakConfig, lane: LaneId) -> [usize; 2] {
    let t = config.lane(lane);
    let mut out = [0, 0];
    for p in peaks {
        match t.class_of(p.amplitude) {
            Some(VehicleClass::Light) => out[0] += 1,
            Some(VehicleClass::Heavy) => out[1] += 1,
            None => {}
        }
    }
    out
}

/// Sample-wise maximum over the lane's sensors.
pub fn fuse_lane(signals: &[SignalRecord], sensors: &[u32]) -> Result<SignalRecord> {
    let chosen: Vec<&SignalRecord> = sensors
        .iter()
        .map(|id| {
            signals
                .iter()
                .find(|s| s.sensor_id == *id)
                .ok_or_else(|| Error::MisalignedChannels(format!("sensor {id} not present")))
        })
        .collect::<Result<_>>()?;
    let first = chosen[0];
    for s in &chosen[1..] {
        if s.sample_rate != first.sample_rate || s.t0 != first.t0 || s.samples.len() != first.samples.len() {
            return Err(Error::MisalignedChannels(format!(
                "sensor {} does not match sensor {} in rate, start or length",
                s.sensor_id, first.sensor_id
            )));
        }
    }
    let samples = (0..first.samples.len())
        .map(|i| chosen.iter().map(|s| s.samples[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(first.with_samples(samples))
}

/// Peaks of one lane with absolute times.
fn lane_peaks(signals: &[SignalRecord], config: &PeakConfig, lane: LaneId, lo: f64) -> Result<Vec<Peak>> {
    let t = config.lane(lane);
    let fused = fuse_lane(signals, &t.sensors)?;
    let mut peaks = detect_peaks_in(&fused.samples, fused.sample_rate, config.min_distance, lo, t.heavy[1]);
    for p in &mut peaks {
        p.time += fused.t0;
    }
    Ok(peaks)
}

/// Whole hours covered by the signals: first hour start and count.
pub fn covered_hours(signals: &[SignalRecord]) -> Option<(f64, usize)> {
    let s = signals.first()?;
    let first = (s.t0 / HOUR).ceil() * HOUR;
    let end = s.t0 + s.duration();
    let n = ((end - first) / HOUR + 1e-9).floor();
    (n >= 1.0).then_some((first, n as usize))
}

fn bin_lane(series: &mut HourlySeries, peaks: &[Peak], t: &LaneThresholds, lane: LaneId) {
    let Some(h0) = series.hours.first().map(|h| h.start) else {
        return;
    };
    for p in peaks {
        let h = ((p.time - h0) / HOUR).floor();
        if h < 0.0 || h as usize >= series.len() {
            continue;
        }
        if let Some(class) = t.class_of(p.amplitude) {
            series.hours[h as usize].counts[category_index(class, lane)] += 1.0;
        }
    }
}

/// Hourly counts from preprocessed strain records over the whole hours they
/// cover.
pub fn count_hourly(signals: &[SignalRecord], config: &PeakConfig) -> Result<HourlySeries> {
    config.validate()?;
    let Some((start, n)) = covered_hours(signals) else {
        return Err(Error::Invalid("signals cover less than one whole hour".into()));
    };
    let mut series = HourlySeries::zeros(start, n);
    for lane in LaneId::ALL {
        let t = config.lane(lane);
        let peaks = lane_peaks(signals, config, lane, t.light[0])?;
        bin_lane(&mut series, &peaks, t, lane);
    }
    Ok(series)
}

/// Candidate boundaries from `lo` to `hi` in steps of `step`.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(hi >= lo) {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

pub const GRID_STEP: f64 = 0.005;

/// Per-lane exhaustive search of the light/heavy boundary over `grid`,
/// minimizing the hourly MAE summed over both classes of that lane. Ties go
/// to the lower boundary. Candidates outside a lane's open amplitude range
/// are skipped.
pub fn calibrate_thresholds(
    signals: &[SignalRecord],
    events: &[VehicleEvent],
    grid: &[f64],
    base: &PeakConfig,
) -> Result<PeakConfig> {
    base.validate()?;
    if grid.is_empty() {
        return Err(Error::config("baseline.grid", "threshold grid is empty"));
    }
    if events.is_empty() {
        return Err(Error::NoGroundTruth("no labeled events".into()));
    }
    let Some((start, n)) = covered_hours(signals) else {
        return Err(Error::NoGroundTruth("labeled span shorter than one hour".into()));
    };
    let truth = hourly_truth(events, start, n)?;
    let mut out = base.clone();
    for lane in LaneId::ALL {
        let t = base.lane(lane);
        let peaks = lane_peaks(signals, base, lane, t.light[0])?;
        let li = category_index(VehicleClass::Light, lane);
        let hi = category_index(VehicleClass::Heavy, lane);
        let mut best: Option<(f64, f64)> = None;
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        for &b in sorted.iter().filter(|&&b| b > t.light[0] && b < t.heavy[1]) {
            let cand = t.with_boundary(b);
            let mut series = HourlySeries::zeros(start, n);
            bin_lane(&mut series, &peaks, &cand, lane);
            let err: f64 = series
                .hours
                .iter()
                .zip(&truth.hours)
                .map(|(p, y)| (p.counts[li] - y.counts[li]).abs() + (p.counts[hi] - y.counts[hi]).abs())
                .sum::<f64>()
                / n as f64;
            if best.map_or(true, |(e, _)| err < e) {
                best = Some((err, b));
            }
        }
        let Some((_, b)) = best else {
            return Err(Error::config(
                "baseline.grid",
                format!("no candidate inside the {} lane range", lane.as_str()),
            ));
        };
        *out.lane_mut(lane) = t.with_boundary(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(signal: &mut [f64], rate: f64, t: f64, amp: f64) {
        for (i, v) in signal.iter_mut().enumerate() {
            let d = (i as f64 / rate - t) / 0.03;
            *v += amp * (-d * d).exp();
        }
    }

    #[test]
    fn flat_signal_has_no_peaks() {
        assert!(detect_peaks(&[0.0; 500], 100.0, &PeakConfig::default()).is_empty());
    }

    #[test]
    fn two_bumps_one_second_apart() {
        let mut s = vec![0.0; 300];
        bump(&mut s, 100.0, 1.0, 1.0);
        bump(&mut s, 100.0, 2.0, 1.0);
        let p = detect_peaks(&s, 100.0, &PeakConfig::default());
        assert_eq!(p.len(), 2);
        assert!((p[0].time - 1.0).abs() < 1e-9 && (p[1].time - 2.0).abs() < 1e-9);
    }

    #[test]
    fn close_candidates_keep_the_higher() {
        let mut s = vec![0.0; 200];
        s[50] = 0.5;
        s[54] = 0.7;
        let p = detect_peaks(&s, 100.0, &PeakConfig::default());
        assert_eq!(p, vec![Peak { time: 0.54, amplitude: 0.7 }]);
    }

    #[test]
    fn left_lane_table_ranges() {
        let c = PeakConfig::default();
        let p = |a| Peak { time: 0.0, amplitude: a };
        assert_eq!(classify_counts(&[p(0.05)], &c, LaneId::LeftOvertaking), [1, 0]);
        assert_eq!(classify_counts(&[p(0.5)], &c, LaneId::LeftOvertaking), [0, 1]);
        assert_eq!(classify_counts(&[p(0.4)], &c, LaneId::LeftOvertaking), [0, 1]);
        assert_eq!(classify_counts(&[p(0.01)], &c, LaneId::LeftOvertaking), [0, 0]);
    }

    #[test]
    fn config_rejects_gaps() {
        let mut c = PeakConfig::default();
        c.left.light[1] = 0.3;
        assert!(c.validate().is_err());
        assert!(PeakConfig::default().validate().is_ok());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let err = calibrate_thresholds(&[], &[], &[], &PeakConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "ConfigInvalid");
    }

    #[test]
    fn grid_steps() {
        let g = threshold_grid(0.1, 0.2, 0.005);
        assert_eq!(g.len(), 21);
        assert!((g[20] - 0.2).abs() < 1e-12);
    }
}
