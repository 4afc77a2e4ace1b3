//! Shared domain types and their validators.

use std::collections::HashSet;
use std::fmt;

use bridgeflow_tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Number of traffic categories (vehicle class × lane).
pub const NUM_CATEGORIES: usize = 4;

/// A per-category vector in canonical [`TrafficCategory`] order.
pub type CategoryCounts = [f64; NUM_CATEGORIES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorModality {
    Acceleration,
    Strain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Light,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LaneId {
    /// Fast lane, farther from the camera.
    #[serde(rename = "left")]
    LeftOvertaking,
    /// Slow lane, closer to the camera.
    #[serde(rename = "right")]
    RightSlow,
}

impl LaneId {
    pub const ALL: [LaneId; 2] = [LaneId::RightSlow, LaneId::LeftOvertaking];

    pub fn as_str(self) -> &'static str {
        match self {
            LaneId::LeftOvertaking => "left",
            LaneId::RightSlow => "right",
        }
    }
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Light => "light",
            VehicleClass::Heavy => "heavy",
        }
    }
}

/// A (class, lane) pair with its fixed label-vector position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrafficCategory {
    pub class: VehicleClass,
    pub lane: LaneId,
}

impl TrafficCategory {
    /// Canonical order: LightRight, LightLeft, HeavyRight, HeavyLeft.
    pub const ALL: [TrafficCategory; NUM_CATEGORIES] = [
        TrafficCategory::new(VehicleClass::Light, LaneId::RightSlow),
        TrafficCategory::new(VehicleClass::Light, LaneId::LeftOvertaking),
        TrafficCategory::new(VehicleClass::Heavy, LaneId::RightSlow),
        TrafficCategory::new(VehicleClass::Heavy, LaneId::LeftOvertaking),
    ];

    pub const fn new(class: VehicleClass, lane: LaneId) -> Self {
        Self { class, lane }
    }

    pub fn index(self) -> usize {
        category_index(self.class, self.lane)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Column name used in CSV outputs, e.g. `light_right`.
    pub fn column(self) -> &'static str {
        ["light_right", "light_left", "heavy_right", "heavy_left"][self.index()]
    }
}

impl fmt::Display for TrafficCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

pub fn category_index(class: VehicleClass, lane: LaneId) -> usize {
    match (class, lane) {
        (VehicleClass::Light, LaneId::RightSlow) => 0,
        (VehicleClass::Light, LaneId::LeftOvertaking) => 1,
        (VehicleClass::Heavy, LaneId::RightSlow) => 2,
        (VehicleClass::Heavy, LaneId::LeftOvertaking) => 3,
    }
}

/// One invariant breach found by a validator.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Machine-checkable invariants.
pub trait Validate {
    fn violations(&self) -> Vec<Violation>;

    fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

/// One vehicle crossing, timed at a reference plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleEvent {
    pub id: u64,
    pub class: VehicleClass,
    pub lane: LaneId,
    /// km/h
    pub speed_kmh: f64,
    /// seconds since the dataset epoch
    pub t_entry: f64,
    pub t_exit: f64,
    #[serde(rename = "axles")]
    pub axle_count: Option<u32>,
}

impl VehicleEvent {
    pub fn category(&self) -> TrafficCategory {
        TrafficCategory::new(self.class, self.lane)
    }

    pub fn dwell(&self) -> f64 {
        self.t_exit - self.t_entry
    }

    pub fn speed_ms(&self) -> f64 {
        self.speed_kmh / 3.6
    }

    /// Field invariants plus the dwell-vs-speed sanity bound for a plane of
    /// `plane_length` metres.
    pub fn violations_for_plane(&self, plane_length: f64) -> Vec<Violation> {
        let mut v = self.violations();
        if v.is_empty() {
            let expected = plane_length / self.speed_ms();
            let rel = (self.dwell() - expected).abs() / expected;
            if rel > 0.2 {
                v.push(Violation::new(
                    "t_exit",
                    format!(
                        "dwell {:.3} s deviates {:.0}% from length/speed {:.3} s",
                        self.dwell(),
                        rel * 100.0,
                        expected
                    ),
                ));
            }
        }
        v
    }
}

impl Validate for VehicleEvent {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.speed_kmh.is_finite() && self.speed_kmh > 0.0) {
            v.push(Violation::new("speed_kmh", format!("must be finite and > 0, got {}", self.speed_kmh)));
        }
        if !(self.t_entry.is_finite() && self.t_exit.is_finite()) {
            v.push(Violation::new("t_entry", "timestamps must be finite"));
        } else if self.t_exit <= self.t_entry {
            v.push(Violation::new("t_exit", "must be later than t_entry"));
        }
        if let Some(a) = self.axle_count {
            if a < 2 {
                v.push(Violation::new("axles", format!("must be >= 2, got {a}")));
            }
        }
        v
    }
}

/// One sensor's uniformly sampled time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub sensor_id: u32,
    pub modality: SensorModality,
    /// Hz
    pub sample_rate: f64,
    /// seconds since the dataset epoch
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl SignalRecord {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }
}

impl Validate for SignalRecord {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.sensor_id == 0 {
            v.push(Violation::new("sensor_id", "sensor ids start at 1"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            v.push(Violation::new("sample_rate", format!("must be > 0, got {}", self.sample_rate)));
        }
        if self.samples.is_empty() {
            v.push(Violation::new("samples", "must be non-empty"));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            v.push(Violation::new("samples", format!("non-finite value at index {i}")));
        }
        v
    }
}

/// One multi-sensor window with its fractional label vector.
///
/// `tensor` has shape `[nodes, channels, steps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub start_time: f64,
    pub tensor: Tensor,
    pub label: CategoryCounts,
}

impl WindowSample {
    pub fn n_nodes(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn n_steps(&self) -> usize {
        self.tensor.shape()[2]
    }

    /// Samples of one node/channel pair.
    pub fn series(&self, node: usize, channel: usize) -> &[f64] {
        let t = self.n_steps();
        let start = (node * self.n_channels() + channel) * t;
        &self.tensor.data()[start..start + t]
    }
}

impl Validate for WindowSample {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.tensor.ndim() != 3 {
            v.push(Violation::new("tensor", format!("expected 3 axes, got {:?}", self.tensor.shape())));
        }
        if !self.tensor.is_finite() {
            v.push(Violation::new("tensor", "contains non-finite values"));
        }
        if self.label.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            v.push(Violation::new("label", format!("components must be finite and >= 0: {:?}", self.label)));
        }
        v
    }
}

/// Sensor-network topology. Edges are directed `(source, target)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default = "default_true")]
    pub self_loops: bool,
}

fn default_true() -> bool {
    true
}

impl ModelGraph {
    /// Two girder lines × four longitudinal stations.
    ///
    /// Node `i` sits on girder `i / 4` (0 = left lane side, 1 = right) at
    /// station `i % 4`. Neighbouring stations on a girder and facing stations
    /// across girders are linked in both directions.
    pub fn girder_grid() -> Self {
        Self::grid(2, 4)
    }

    pub fn grid(girders: usize, stations: usize) -> Self {
        let node = |g: usize, s: usize| g * stations + s;
        let mut edges = Vec::new();
        for g in 0..girders {
            for s in 0..stations.saturating_sub(1) {
                edges.push((node(g, s), node(g, s + 1)));
                edges.push((node(g, s + 1), node(g, s)));
            }
        }
        for s in 0..stations {
            for g in 0..girders.saturating_sub(1) {
                edges.push((node(g, s), node(g + 1, s)));
                edges.push((node(g + 1, s), node(g, s)));
            }
        }
        Self {
            n_nodes: girders * stations,
            edges,
            self_loops: true,
        }
    }

    /// Edge list including one self-loop per node when enabled, with no
    /// duplicates.
    pub fn message_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.edges.iter().copied().filter(|(s, t)| s != t).collect();
        if self.self_loops {
            out.extend((0..self.n_nodes).map(|i| (i, i)));
        }
        out
    }
}

impl Validate for ModelGraph {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.n_nodes == 0 {
            v.push(Violation::new("n_nodes", "graph needs at least one node"));
        }
        let mut seen = HashSet::new();
        for &(s, t) in &self.edges {
            if s >= self.n_nodes || t >= self.n_nodes {
                v.push(Violation::new("edges", format!("edge ({s}, {t}) out of range")));
            }
            if !seen.insert((s, t)) {
                v.push(Violation::new("edges", format!("duplicate edge ({s}, {t})")));
            }
        }
        if !self.self_loops {
            // Without self-loops a node with no in-edges receives no messages.
            let mut has_in = vec![false; self.n_nodes];
            for &(_, t) in &self.edges {
                if t < self.n_nodes {
                    has_in[t] = true;
                }
            }
            if let Some(i) = has_in.iter().position(|h| !h) {
                v.push(Violation::new("edges", format!("node {i} has no incoming edge")));
            }
        }
        v
    }
}
