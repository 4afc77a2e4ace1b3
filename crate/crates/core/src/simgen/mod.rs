//! Synthetic traffic and bridge responses with exact ground truth.
//!
//! Vehicles arrive as per-category Poisson streams and cross a single span
//! as point loads. Strain follows a triangular influence line per sensor,
//! acceleration a damped single-mode ring-down excited as the load passes
//! the sensor. Lane-to-girder coupling makes the lane of a vehicle hard to
//! read from any single girder line.

mod bridge;
mod camera;
mod traffic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use bridge::{
    accel_response, lane_side, passage_time, render_signals, strain_response, BridgeModel, Contribution, NodeSpec,
    RenderSpec, RenderedSignals, Timeline,
};
pub use camera::{camera_event, synthesize_tracks, CameraModel};
pub use traffic::{
    axles_for, default_hourly_rates, sample_traffic, sample_traffic_counts, SimVehicle, TrafficModel, MIN_SPEED_KMH,
};

/// Independent random stream `(chunk, kind)` derived from a run seed.
pub(crate) fn stream_rng(seed: u64, chunk: u64, kind: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ chunk.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(kind);
    rng
}

/// Everything that determines a simulated run apart from its length and
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub bridge: BridgeModel,
    pub traffic: TrafficModel,
    pub render: RenderSpec,
    pub camera: CameraModel,
    /// Dataset epoch offset, seconds.
    pub t0: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.bridge.validate()?;
        self.traffic.validate()?;
        self.camera.validate()
    }
}

/// Output of [`simulate`]: signals plus the ground-truth vehicles.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub vehicles: Vec<SimVehicle>,
    pub signals: RenderedSignals,
}

impl Simulation {
    pub fn events(&self) -> Vec<crate::types::VehicleEvent> {
        self.vehicles.iter().map(|v| v.event.clone()).collect()
    }
}

/// Sample traffic for `hours` and render its sensor response.
pub fn simulate(scenario: &Scenario, hours: f64, seed: u64) -> Result<Simulation> {
    scenario.validate()?;
    let duration = hours * 3600.0;
    let vehicles = sample_traffic(&scenario.traffic, scenario.t0, duration, seed)?;
    let signals = render_signals(&vehicles, &scenario.bridge, scenario.t0, duration, &scenario.render, seed)?;
    Ok(Simulation { vehicles, signals })
}
