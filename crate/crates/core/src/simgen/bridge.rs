use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream_rng;
use super::traffic::SimVehicle;
use crate::error::{Error, Result};
use crate::types::{LaneId, SensorModality, SignalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    /// Lateral position, metres.
    pub x: f64,
    /// Longitudinal position along the span, metres.
    pub y: f64,
    /// 0 = girder under the left lane, 1 = under the right lane.
    pub girder: usize,
    /// Hz
    pub modal_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeModel {
    /// metres
    pub span: f64,
    pub nodes: Vec<NodeSpec>,
    pub damping_ratio: f64,
    /// `coupling[lane][girder]`, lanes and girders indexed left = 0,
    /// right = 1.
    pub coupling: [[f64; 2]; 2],
    /// Strain per tonne at the influence-line peak.
    pub strain_gain: f64,
    /// Acceleration amplitude per tonne at 100 km/h.
    pub accel_gain: f64,
    pub noise_std_accel: f64,
    pub noise_std_strain: f64,
    /// Amplitude of the slow thermal-like baseline wander on strain.
    pub drift_strain: f64,
    /// Constant sensor offset scale on acceleration.
    pub offset_accel: f64,
}

impl Default for BridgeModel {
    fn default() -> Self {
        let mut nodes = Vec::with_capacity(8);
        for girder in 0..2 {
            for station in 0..4 {
                let i = girder * 4 + station;
                nodes.push(NodeSpec {
                    x: if girder == 0 { 5.625 } else { 1.875 },
                    y: 5.0 * (station + 1) as f64,
                    girder,
                    modal_freq: 3.0 + 5.0 * i as f64 / 7.0,
                });
            }
        }
        Self {
            span: 25.0,
            nodes,
            damping_ratio: 0.02,
            coupling: [[1.0, 0.35], [0.35, 1.0]],
            strain_gain: 1.0,
            accel_gain: 0.01,
            noise_std_accel: 0.002,
            noise_std_strain: 0.02,
            drift_strain: 3.0,
            offset_accel: 0.01,
        }
    }
}

pub fn lane_side(lane: LaneId) -> usize {
    match lane {
        LaneId::LeftOvertaking => 0,
        LaneId::RightSlow => 1,
    }
}

impl BridgeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.span > 0.0) {
            return Err(Error::config("bridge.span", "must be > 0"));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 1.0) {
            return Err(Error::config("bridge.damping_ratio", "must lie in (0, 1)"));
        }
        for (i, row) in self.coupling.iter().enumerate() {
            if row.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::config("bridge.coupling", "entries must lie in [0, 1]"));
            }
            if row[i] < row[1 - i] {
                return Err(Error::config("bridge.coupling", "diagonal must dominate off-diagonal"));
            }
        }
        if self.nodes.is_empty() {
            return Err(Error::config("bridge.nodes", "at least one node required"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.girder > 1 || !(n.y > 0.0 && n.y < self.span) || !(n.modal_freq > 0.0) {
                return Err(Error::config(
                    format!("bridge.nodes[{i}]"),
                    "girder must be 0 or 1, y inside the span, modal_freq > 0",
                ));
            }
        }
        if [self.noise_std_accel, self.noise_std_strain, self.drift_strain, self.offset_accel]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::config("bridge.noise_std_strain", "noise and drift scales must be >= 0"));
        }
        Ok(())
    }

    fn gain(&self, lane: LaneId, node: usize) -> f64 {
        self.coupling[lane_side(lane)][self.nodes[node].girder]
    }

    /// Triangular influence line with unit peak at `a`, zero at both
    /// supports.
    pub fn influence(&self, node: usize, y: f64) -> f64 {
        let a = self.nodes[node].y;
        if y <= 0.0 || y >= self.span {
            0.0
        } else if y <= a {
            y / a
        } else {
            (self.span - y) / (self.span - a)
        }
    }
}

/// Uniform sampling grid `t_i = t0 + i / rate`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    pub t0: f64,
    pub rate: f64,
    pub n: usize,
}

impl Timeline {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    /// First index with `t_i >= t`.
    fn index_at_or_after(&self, t: f64) -> usize {
        let i = ((t - self.t0) * self.rate).ceil();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.n)
        }
    }
}

/// A response confined to samples `start..start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Contribution {
    pub fn add_into(&self, buf: &mut [f64]) {
        for (b, v) in buf[self.start..].iter_mut().zip(&self.values) {
            *b += v;
        }
    }

    pub fn peak_index(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| self.start + i)
    }
}

/// Quasi-static strain at `node` while the vehicle is on the span.
pub fn strain_response(v: &SimVehicle, node: usize, bridge: &BridgeModel, tl: &Timeline) -> Contribution {
    let e = &v.event;
    let speed = e.speed_ms();
    let t_off = e.t_entry + bridge.span / speed;
    let start = tl.index_at_or_after(e.t_entry);
    let end = tl.index_at_or_after(t_off);
    let scale = bridge.strain_gain * v.weight * bridge.gain(e.lane, node);
    let values = (start..end)
        .map(|i| scale * bridge.influence(node, (tl.time(i) - e.t_entry) * speed))
        .collect();
    Contribution { start, values }
}

/// Envelope level below which the ring-down is truncated.
const RINGDOWN_FLOOR: f64 = 1e-6;
const RINGDOWN_MAX_SECONDS: f64 = 60.0;

/// Time at which the vehicle passes over `node`.
pub fn passage_time(v: &SimVehicle, node: usize, bridge: &BridgeModel) -> f64 {
    v.event.t_entry + bridge.nodes[node].y / v.event.speed_ms()
}

/// Damped free vibration excited when the vehicle passes the node.
pub fn accel_response(v: &SimVehicle, node: usize, bridge: &BridgeModel, tl: &Timeline) -> Contribution {
    let e = &v.event;
    let zeta = bridge.damping_ratio;
    let omega = 2.0 * PI * bridge.nodes[node].modal_freq;
    let omega_d = omega * (1.0 - zeta * zeta).sqrt();
    let decay = zeta * omega;
    let amp = bridge.accel_gain * v.weight * (e.speed_kmh / 100.0) * bridge.gain(e.lane, node);
    let t_pass = passage_time(v, node, bridge);
    let horizon = (-RINGDOWN_FLOOR.ln() / decay).min(RINGDOWN_MAX_SECONDS);
    let start = tl.index_at_or_after(t_pass);
    let end = tl.index_at_or_after(t_pass + horizon);
    let values = (start..end)
        .map(|i| {
            let tau = tl.time(i) - t_pass;
            amp * (-decay * tau).exp() * (omega_d * tau).sin()
        })
        .collect();
    Contribution { start, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSpec {
    /// Hz; `None` skips the modality.
    pub accel_rate: Option<f64>,
    pub strain_rate: Option<f64>,
    /// Include sensor noise, drift and offsets.
    pub noise: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            accel_rate: Some(250.0),
            strain_rate: Some(100.0),
            noise: true,
        }
    }
}

/// Rendered sensor channels, one record per bridge node and modality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderedSignals {
    pub accel: Vec<SignalRecord>,
    pub strain: Vec<SignalRecord>,
}

const CHUNK_SECONDS: f64 = 3600.0;

fn add_noise(buf: &mut [f64], tl: &Timeline, std: f64, seed: u64, stream: u64) {
    if std <= 0.0 {
        return;
    }
    let chunk_len = (CHUNK_SECONDS * tl.rate).round() as usize;
    let d = Normal::new(0.0, std).expect("finite std");
    for (c, part) in buf.chunks_mut(chunk_len.max(1)).enumerate() {
        let mut rng = stream_rng(seed, c as u64, stream);
        for v in part {
            *v += d.sample(&mut rng);
        }
    }
}

fn render_modality(
    vehicles: &[SimVehicle],
    bridge: &BridgeModel,
    modality: SensorModality,
    tl: Timeline,
    noise: bool,
    seed: u64,
) -> Vec<SignalRecord> {
    (0..bridge.nodes.len())
        .map(|node| {
            let mut buf = vec![0.0; tl.n];
            for v in vehicles {
                let c = match modality {
                    SensorModality::Strain => strain_response(v, node, bridge, &tl),
                    SensorModality::Acceleration => accel_response(v, node, bridge, &tl),
                };
                c.add_into(&mut buf);
            }
            if noise {
                let tag = match modality {
                    SensorModality::Acceleration => 0,
                    SensorModality::Strain => 1,
                };
                let stream = 16 + 2 * (node as u64 * 2 + tag);
                let mut rng = stream_rng(seed, u64::MAX, stream);
                let u = |rng: &mut rand_chacha::ChaCha8Rng| rand::Rng::gen::<f64>(rng);
                match modality {
                    SensorModality::Strain => {
                        // two slow sinusoids plus an offset
                        let a1 = bridge.drift_strain * (0.5 + u(&mut rng));
                        let p1 = 1800.0 + 5400.0 * u(&mut rng);
                        let a2 = 0.3 * bridge.drift_strain * u(&mut rng);
                        let p2 = 300.0 + 600.0 * u(&mut rng);
                        let (ph1, ph2) = (2.0 * PI * u(&mut rng), 2.0 * PI * u(&mut rng));
                        let offset = bridge.drift_strain * (u(&mut rng) - 0.5);
                        for (i, b) in buf.iter_mut().enumerate() {
                            let t = tl.time(i);
                            *b += offset + a1 * (2.0 * PI * t / p1 + ph1).sin() + a2 * (2.0 * PI * t / p2 + ph2).sin();
                        }
                        add_noise(&mut buf, &tl, bridge.noise_std_strain, seed, stream + 1);
                    }
                    SensorModality::Acceleration => {
                        let offset = bridge.offset_accel * (2.0 * u(&mut rng) - 1.0);
                        buf.iter_mut().for_each(|b| *b += offset);
                        add_noise(&mut buf, &tl, bridge.noise_std_accel, seed, stream + 1);
                    }
                }
            }
            SignalRecord {
                sensor_id: node as u32 + 1,
                modality,
                sample_rate: tl.rate,
                t0: tl.t0,
                samples: buf,
            }
        })
        .collect()
}

/// Superpose every vehicle's response on each node, then add sensor noise
/// and drift (when enabled). Noise is drawn per hour from derived streams.
pub fn render_signals(
    vehicles: &[SimVehicle],
    bridge: &BridgeModel,
    t0: f64,
    duration: f64,
    spec: &RenderSpec,
    seed: u64,
) -> Result<RenderedSignals> {
    bridge.validate()?;
    if !(duration > 0.0) {
        return Err(Error::config("scenario.duration", "must be > 0"));
    }
    let timeline = |rate: f64| Timeline {
        t0,
        rate,
        n: (duration * rate).round() as usize,
    };
    let mut out = RenderedSignals::default();
    if let Some(rate) = spec.accel_rate {
        out.accel = render_modality(vehicles, bridge, SensorModality::Acceleration, timeline(rate), spec.noise, seed);
    }
    if let Some(rate) = spec.strain_rate {
        out.strain = render_modality(vehicles, bridge, SensorModality::Strain, timeline(rate), spec.noise, seed);
    }
    Ok(out)
}
