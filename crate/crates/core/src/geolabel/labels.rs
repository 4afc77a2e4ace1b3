//! Fractional window labels: each vehicle's unit count is split across the
//! windows its sensor-plane dwell interval overlaps.

use crate::error::{Error, Result};
use crate::types::{CategoryCounts, VehicleEvent, NUM_CATEGORIES};

/// Start times of a regular window grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowGrid {
    pub start: f64,
    pub len: f64,
    pub stride: f64,
    pub count: usize,
}

impl WindowGrid {
    pub fn window(&self, w: usize) -> (f64, f64) {
        let s = self.start + w as f64 * self.stride;
        (s, s + self.len)
    }

    pub fn starts(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|w| self.start + w as f64 * self.stride)
    }
}

/// Label matrix, one row per window in canonical category order.
pub fn assign_fractional_labels(events: &[VehicleEvent], grid: &WindowGrid) -> Result<Vec<CategoryCounts>> {
    if !(grid.len > 0.0 && grid.stride > 0.0) {
        return Err(Error::config("window", "length and stride must be positive"));
    }
    let mut labels = vec![[0.0; NUM_CATEGORIES]; grid.count];
    for e in events {
        let dwell = e.dwell();
        if !(dwell > 0.0) {
            return Err(Error::ZeroDwell(e.id));
        }
        let k = e.category().index();
        // Windows w with start_w < t_exit and start_w + len > t_entry.
        let first = ((e.t_entry - grid.len - grid.start) / grid.stride).floor().max(0.0) as usize;
        let last = ((e.t_exit - grid.start) / grid.stride).ceil();
        if last < 0.0 {
            continue;
        }
        let last = (last as usize).min(grid.count.saturating_sub(1));
        for (w, row) in labels.iter_mut().enumerate().take(last + 1).skip(first) {
            let (a, b) = grid.window(w);
            let overlap = e.t_exit.min(b) - e.t_entry.max(a);
            if overlap > 0.0 {
                row[k] += overlap / dwell;
            }
        }
    }
    Ok(labels)
}
