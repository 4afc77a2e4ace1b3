use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::error::{Error, Result};
use crate::types::{CategoryCounts, LaneId, TrafficCategory, VehicleClass, VehicleEvent, NUM_CATEGORIES};

/// Weekly counts over 70 observed hours, canonical category order.
const OBSERVED_COUNTS: CategoryCounts = [68498.0, 55572.0, 4784.0, 52.0];
const OBSERVED_HOURS: f64 = 70.0;

/// Vehicles per hour in canonical order, proportional to the observed
/// weekly volumes.
pub fn default_hourly_rates() -> CategoryCounts {
    OBSERVED_COUNTS.map(|c| c / OBSERVED_HOURS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficModel {
    /// Arrivals per hour: light_right, light_left, heavy_right, heavy_left.
    pub hourly_rate: CategoryCounts,
    /// km/h, `[light, heavy]`
    pub speed_mean: [f64; 2],
    pub speed_std: [f64; 2],
    /// tonnes, `[light, heavy]`
    pub weight_mean: [f64; 2],
    /// Coefficient of variation of the weight, `[light, heavy]`.
    pub weight_cv: [f64; 2],
    /// Minimum gap between same-lane arrivals, seconds.
    pub min_headway: f64,
    /// Sensor-plane length travelled during a crossing, metres.
    pub plane_length: f64,
}

impl Default for TrafficModel {
    fn default() -> Self {
        Self {
            hourly_rate: default_hourly_rates(),
            speed_mean: [96.5, 85.0],
            speed_std: [11.7, 13.1],
            weight_mean: [2.0, 25.0],
            weight_cv: [0.2, 0.3],
            min_headway: 0.5,
            plane_length: 25.0,
        }
    }
}

pub const MIN_SPEED_KMH: f64 = 30.0;

fn class_slot(class: VehicleClass) -> usize {
    match class {
        VehicleClass::Light => 0,
        VehicleClass::Heavy => 1,
    }
}

pub fn axles_for(class: VehicleClass) -> u32 {
    match class {
        VehicleClass::Light => 2,
        VehicleClass::Heavy => 5,
    }
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        if self.hourly_rate.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::config("traffic.hourly_rate", "rates must be finite and >= 0"));
        }
        for k in 0..2 {
            if !(self.speed_mean[k] > MIN_SPEED_KMH && self.speed_std[k] >= 0.0) {
                return Err(Error::config("traffic.speed_mean", format!("means must exceed {MIN_SPEED_KMH} km/h")));
            }
            if !(self.weight_mean[k] > 0.0 && self.weight_cv[k] >= 0.0 && self.weight_cv[k] < 1.0) {
                return Err(Error::config("traffic.weight_mean", "weights must be > 0 with cv in [0, 1)"));
            }
        }
        if !(self.min_headway >= 0.0 && self.plane_length > 0.0) {
            return Err(Error::config("traffic.min_headway", "headway must be >= 0 and plane length > 0"));
        }
        Ok(())
    }
}

/// A simulated crossing: the sensor-plane event plus the load it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVehicle {
    pub event: VehicleEvent,
    /// tonnes
    pub weight: f64,
}

const CHUNK_SECONDS: f64 = 3600.0;

/// Arrival times of one hour-sized chunk, per category, unsorted across
/// categories.
fn chunk_arrivals(model: &TrafficModel, chunk: u64, start: f64, end: f64, seed: u64) -> Vec<(f64, usize)> {
    let mut rng = stream_rng(seed, chunk, 0);
    let mut out = Vec::new();
    for k in 0..NUM_CATEGORIES {
        let rate = model.hourly_rate[k] / 3600.0;
        if rate <= 0.0 {
            continue;
        }
        let gap = Exp::new(rate).expect("positive rate");
        let mut t = start + gap.sample(&mut rng);
        while t < end {
            out.push((t, k));
            t += gap.sample(&mut rng);
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Drop arrivals closer than `min_headway` to the previous kept arrival in
/// the same lane. `last` carries state across chunks.
fn enforce_headway(arrivals: Vec<(f64, usize)>, min_headway: f64, last: &mut [f64; 2]) -> Vec<(f64, usize)> {
    arrivals
        .into_iter()
        .filter(|&(t, k)| {
            let lane = match TrafficCategory::ALL[k].lane {
                LaneId::LeftOvertaking => 0,
                LaneId::RightSlow => 1,
            };
            if t - last[lane] >= min_headway {
                last[lane] = t;
                true
            } else {
                false
            }
        })
        .collect()
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, std: f64, floor: f64) -> f64 {
    if std == 0.0 {
        return mean.max(floor);
    }
    let d = Normal::new(mean, std).expect("finite std");
    loop {
        let v = d.sample(rng);
        if v > floor {
            return v;
        }
    }
}

fn chunks(duration: f64) -> impl Iterator<Item = (u64, f64, f64)> {
    let n = (duration / CHUNK_SECONDS).ceil().max(0.0) as u64;
    (0..n).map(move |c| {
        let s = c as f64 * CHUNK_SECONDS;
        (c, s, (s + CHUNK_SECONDS).min(duration))
    })
}

/// Poisson arrivals per category over `[t0, t0 + duration)`, thinned for
/// same-lane headway, with truncated-normal speeds and weights.
///
/// Hours are generated from independent derived streams, so the result does
/// not depend on how callers split the work.
pub fn sample_traffic(model: &TrafficModel, t0: f64, duration: f64, seed: u64) -> Result<Vec<SimVehicle>> {
    model.validate()?;
    if !(duration > 0.0) {
        return Err(Error::config("scenario.duration", "must be > 0"));
    }
    let mut last = [f64::NEG_INFINITY; 2];
    let mut out = Vec::new();
    for (c, s, e) in chunks(duration) {
        let arrivals = enforce_headway(chunk_arrivals(model, c, s, e, seed), model.min_headway, &mut last);
        let mut rng = stream_rng(seed, c, 1);
        for (t, k) in arrivals {
            let cat = TrafficCategory::ALL[k];
            let slot = class_slot(cat.class);
            let speed = truncated_normal(&mut rng, model.speed_mean[slot], model.speed_std[slot], MIN_SPEED_KMH);
            let wm = model.weight_mean[slot];
            let weight = truncated_normal(&mut rng, wm, wm * model.weight_cv[slot], 0.1 * wm);
            let t_entry = t0 + t;
            out.push(SimVehicle {
                event: VehicleEvent {
                    id: 0,
                    class: cat.class,
                    lane: cat.lane,
                    speed_kmh: speed,
                    t_entry,
                    t_exit: t_entry + model.plane_length / (speed / 3.6),
                    axle_count: Some(axles_for(cat.class)),
                },
                weight,
            });
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        v.event.id = i as u64;
    }
    Ok(out)
}

/// Per-category arrival counts of [`sample_traffic`] without materializing
/// the events.
pub fn sample_traffic_counts(model: &TrafficModel, duration: f64, seed: u64) -> Result<[u64; NUM_CATEGORIES]> {
    model.validate()?;
    let mut last = [f64::NEG_INFINITY; 2];
    let mut counts = [0u64; NUM_CATEGORIES];
    for (c, s, e) in chunks(duration) {
        for (_, k) in enforce_headway(chunk_arrivals(model, c, s, e, seed), model.min_headway, &mut last) {
            counts[k] += 1;
        }
    }
    Ok(counts)
}

/// Uniform draw helper shared with the camera synthesizer.
pub(crate) fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p > 0.0 && rng.gen::<f64>() < p
}
