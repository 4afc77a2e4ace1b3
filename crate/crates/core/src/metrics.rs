//! Hourly aggregation, MAE, and overlap-over-union accuracy of count series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geolabel::{assign_fractional_labels, WindowGrid};
use crate::types::{CategoryCounts, TrafficCategory, VehicleEvent, NUM_CATEGORIES};

pub const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourBin {
    /// Seconds since the dataset epoch, a multiple of 3600.
    pub start: f64,
    pub counts: CategoryCounts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HourlySeries {
    pub hours: Vec<HourBin>,
}

impl HourlySeries {
    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Zero series over `n` hours starting at the hour containing `start`.
    pub fn zeros(start: f64, n: usize) -> Self {
        let h0 = (start / HOUR).floor() * HOUR;
        Self {
            hours: (0..n)
                .map(|i| HourBin {
                    start: h0 + i as f64 * HOUR,
                    counts: [0.0; NUM_CATEGORIES],
                })
                .collect(),
        }
    }

    pub fn category(&self, k: usize) -> Vec<f64> {
        self.hours.iter().map(|h| h.counts[k]).collect()
    }

    pub fn totals(&self) -> CategoryCounts {
        let mut t = [0.0; NUM_CATEGORIES];
        for h in &self.hours {
            for k in 0..NUM_CATEGORIES {
                t[k] += h.counts[k];
            }
        }
        t
    }

    /// Keep only the hours whose start satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(f64) -> bool) -> Self {
        Self {
            hours: self.hours.iter().copied().filter(|h| keep(h.start)).collect(),
        }
    }
}

/// Sum clamped per-window predictions into hours; a window straddling an
/// hour boundary contributes in proportion to its overlap with each hour.
pub fn hourly_aggregate(predictions: &[CategoryCounts], grid: &WindowGrid) -> Result<HourlySeries> {
    if predictions.len() != grid.count {
        return Err(Error::LengthMismatch(predictions.len(), grid.count));
    }
    if grid.count == 0 {
        return Ok(HourlySeries::default());
    }
    let first = (grid.start / HOUR).floor();
    let (_, last_end) = grid.window(grid.count - 1);
    let n_hours = ((last_end / HOUR).ceil() - first).max(1.0) as usize;
    let mut series = HourlySeries::zeros(grid.start, n_hours);
    for (w, p) in predictions.iter().enumerate() {
        let (a, b) = grid.window(w);
        let h_a = ((a / HOUR).floor() - first) as usize;
        let h_b = (((b / HOUR).ceil() - first) as usize).min(n_hours);
        for h in h_a..h_b {
            let (lo, hi) = (series.hours[h].start, series.hours[h].start + HOUR);
            let overlap = b.min(hi) - a.max(lo);
            if overlap > 0.0 {
                let f = overlap / grid.len;
                for k in 0..NUM_CATEGORIES {
                    series.hours[h].counts[k] += p[k].max(0.0) * f;
                }
            }
        }
    }
    Ok(series)
}

/// True hourly counts: each event is split across hours by its dwell
/// overlap, exactly as window labels are.
pub fn hourly_truth(events: &[VehicleEvent], start: f64, n_hours: usize) -> Result<HourlySeries> {
    let h0 = (start / HOUR).floor() * HOUR;
    let grid = WindowGrid {
        start: h0,
        len: HOUR,
        stride: HOUR,
        count: n_hours,
    };
    let labels = assign_fractional_labels(events, &grid)?;
    Ok(HourlySeries {
        hours: labels
            .into_iter()
            .enumerate()
            .map(|(i, counts)| HourBin {
                start: h0 + i as f64 * HOUR,
                counts,
            })
            .collect(),
    })
}

fn check_pair(p: &[f64], y: &[f64]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::LengthMismatch(p.len(), y.len()));
    }
    Ok(())
}

fn check_non_negative(xs: &[f64]) -> Result<()> {
    match xs.iter().find(|v| !(**v >= 0.0)) {
        Some(&v) => Err(Error::NegativeInput(v)),
        None => Ok(()),
    }
}

pub fn mae(p: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(p, y)?;
    if p.is_empty() {
        return Err(Error::Invalid("MAE of empty series".into()));
    }
    Ok(p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// MAE divided by the mean of the true series (a ratio, not ×100).
pub fn mae_percent(p: &[f64], y: &[f64]) -> Result<f64> {
    let m = mae(p, y)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(m / mean)
}

/// `Σ min(p, y) / Σ max(p, y)`; 1 when both series are all zero.
pub fn generalized_accuracy(p: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(p, y)?;
    check_non_negative(p)?;
    check_non_negative(y)?;
    let (mut inter, mut union) = (0.0, 0.0);
    for (&a, &b) in p.iter().zip(y) {
        inter += a.min(b);
        union += a.max(b);
    }
    Ok(if union == 0.0 { 1.0 } else { inter / union })
}

/// Checks `n · MAE = Σ max − Σ min` to 1e-9 (relative to the union).
pub fn mae_accuracy_identity_check(p: &[f64], y: &[f64]) -> Result<bool> {
    check_pair(p, y)?;
    check_non_negative(p)?;
    check_non_negative(y)?;
    if p.is_empty() {
        return Ok(true);
    }
    let n = p.len() as f64;
    let lhs = mae(p, y)? * n;
    let (mut inter, mut union) = (0.0, 0.0);
    for (&a, &b) in p.iter().zip(y) {
        inter += a.min(b);
        union += a.max(b);
    }
    Ok((lhs - (union - inter)).abs() <= 1e-9 * union.max(1.0))
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    #[serde(rename = "MAE")]
    pub mae: f64,
    /// Percent of the mean true hourly count.
    #[serde(rename = "MAE_percent")]
    pub mae_percent: f64,
    pub accuracy: f64,
    pub true_total: f64,
    /// `"unreliable"` when the category is too rare to score meaningfully.
    pub flag: String,
}

/// Categories holding less than this share of all true vehicles, or fewer
/// than [`MIN_RELIABLE_COUNT`] vehicles, are flagged.
pub const MIN_RELIABLE_SHARE: f64 = 1e-3;
pub const MIN_RELIABLE_COUNT: f64 = 20.0;

pub fn metrics_report(pred: &HourlySeries, truth: &HourlySeries) -> Result<Vec<CategoryMetrics>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.hours.iter().zip(&truth.hours).any(|(a, b)| a.start != b.start) {
        return Err(Error::Invalid("prediction and truth cover different hours".into()));
    }
    let totals = truth.totals();
    let all: f64 = totals.iter().sum();
    TrafficCategory::ALL
        .iter()
        .map(|cat| {
            let k = cat.index();
            let p: Vec<f64> = pred.category(k).into_iter().map(|v| v.max(0.0)).collect();
            let y = truth.category(k);
            let unreliable = totals[k] < MIN_RELIABLE_COUNT || (all > 0.0 && totals[k] / all < MIN_RELIABLE_SHARE);
            Ok(CategoryMetrics {
                category: cat.column().to_owned(),
                mae: mae(&p, &y)?,
                mae_percent: 100.0 * mae_percent(&p, &y)?,
                accuracy: generalized_accuracy(&p, &y)?,
                true_total: totals[k],
                flag: if unreliable { "unreliable" } else { "" }.to_owned(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(generalized_accuracy(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(generalized_accuracy(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(generalized_accuracy(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(generalized_accuracy(&[0.0], &[0.0]).unwrap(), 1.0);
        assert!(matches!(generalized_accuracy(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(generalized_accuracy(&[-1.0], &[1.0]), Err(Error::NegativeInput(_))));
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mae(&[5.0, 6.0], &[3.0, 4.0]).unwrap(), 2.0);
        assert_eq!(mae_percent(&[5.0, 6.0], &[3.0, 5.0]).unwrap(), 1.5 / 4.0);
    }

    #[test]
    fn constant_windows_sum_per_hour() {
        let grid = WindowGrid {
            start: 0.0,
            len: 5.0,
            stride: 5.0,
            count: 720,
        };
        let s = hourly_aggregate(&vec![[0.1, 0.0, 0.0, 0.0]; 720], &grid).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.hours[0].counts[0] - 72.0).abs() < 1e-9);
    }

    #[test]
    fn straddling_window_splits_between_hours() {
        let grid = WindowGrid {
            start: 3597.5,
            len: 5.0,
            stride: 5.0,
            count: 1,
        };
        let s = hourly_aggregate(&[[2.0, 0.0, 0.0, -1.0]], &grid).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.hours[0].counts, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.hours[1].counts, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rare_category_is_flagged() {
        let mut truth = HourlySeries::zeros(0.0, 2);
        truth.hours[0].counts = [900.0, 800.0, 60.0, 1.0];
        truth.hours[1].counts = [950.0, 790.0, 70.0, 0.0];
        let report = metrics_report(&truth, &truth).unwrap();
        assert_eq!(report[3].flag, "unreliable");
        assert!(report[..3].iter().all(|r| r.flag.is_empty()));
    }
}
