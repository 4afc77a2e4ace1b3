use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream_rng;
use super::traffic::coin;
use crate::error::{Error, Result};
use crate::geolabel::{project_to_pixel, HomographyMatrix, PixelPoint, PlaneSpec, RawTrack, TrackFrame, WorldPoint};
use crate::types::{LaneId, VehicleClass, VehicleEvent};

/// A fixed roadside camera looking along the carriageway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    /// Road plane (metres) to image (pixels).
    pub world_to_pixel: HomographyMatrix,
    /// frames per second
    pub fps: f64,
    /// Visible stretch of road, metres along the travel direction.
    pub view_y: (f64, f64),
    /// Probability that a frame's detection is missing.
    pub dropout: f64,
    /// Probability that a frame's class vote is wrong.
    pub vote_flip: f64,
    /// Lateral wander of the reference point inside its lane, metres.
    pub lateral_jitter: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        let a = [[60.0, 8.0, 420.0], [-3.0, -22.0, 1000.0], [0.0, 0.03, 1.0]];
        Self {
            world_to_pixel: HomographyMatrix { a },
            fps: 25.0,
            view_y: (-3.0, 28.0),
            dropout: 0.2,
            vote_flip: 0.2,
            lateral_jitter: 0.3,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::config("camera.fps", "must be > 0"));
        }
        if !(self.view_y.0 < self.view_y.1) {
            return Err(Error::config("camera.view_y", "start must precede end"));
        }
        if !((0.0..1.0).contains(&self.dropout) && (0.0..0.5).contains(&self.vote_flip)) {
            return Err(Error::config("camera.dropout", "dropout must lie in [0, 1), vote_flip in [0, 0.5)"));
        }
        Ok(())
    }

    /// Lane-marking corners of the plane of interest with their pixels.
    pub fn control_points(&self, plane: &PlaneSpec) -> Result<Vec<(PixelPoint, WorldPoint)>> {
        let xs = [plane.right_lane_x.0, plane.right_lane_x.1, plane.left_lane_x.1];
        let ys = [0.0, plane.length / 2.0, plane.length];
        let mut out = Vec::new();
        for &y in &ys {
            for &x in &xs {
                let w = WorldPoint::new(x, y);
                out.push((project_to_pixel(&self.world_to_pixel, w)?, w));
            }
        }
        Ok(out)
    }
}

/// Where the camera sees a sensor-plane event: shifted downstream by the
/// camera offset.
pub fn camera_event(event: &VehicleEvent, plane: &PlaneSpec) -> VehicleEvent {
    let shift = plane.offset_to_sensors / event.speed_ms();
    VehicleEvent {
        t_entry: event.t_entry + shift,
        t_exit: event.t_exit + shift,
        ..event.clone()
    }
}

fn lane_centre(plane: &PlaneSpec, lane: LaneId) -> f64 {
    let (lo, hi) = match lane {
        LaneId::RightSlow => plane.right_lane_x,
        LaneId::LeftOvertaking => plane.left_lane_x,
    };
    0.5 * (lo + hi)
}

/// Frame-level pixel tracks for camera-plane events.
///
/// Each vehicle moves at constant speed through the view; frames sit on the
/// camera's clock, detections drop out at random (the first and last are
/// kept) and class votes flip at random.
pub fn synthesize_tracks(
    camera_events: &[VehicleEvent],
    camera: &CameraModel,
    plane: &PlaneSpec,
    seed: u64,
) -> Result<Vec<RawTrack>> {
    camera.validate()?;
    let mut rng = stream_rng(seed, 0, 7);
    let mut tracks = Vec::with_capacity(camera_events.len());
    for e in camera_events {
        let v = e.speed_ms();
        let t_first = e.t_entry + camera.view_y.0 / v;
        let t_last = e.t_entry + camera.view_y.1 / v;
        let k0 = (t_first * camera.fps).ceil() as i64;
        let k1 = (t_last * camera.fps).floor() as i64;
        let half_width = 0.5 * (plane.right_lane_x.1 - plane.right_lane_x.0);
        let jitter = camera.lateral_jitter.min(0.8 * half_width);
        let x = lane_centre(plane, e.lane) + jitter * (2.0 * rng.gen::<f64>() - 1.0);
        let mut frames = Vec::new();
        for k in k0..=k1 {
            let t = k as f64 / camera.fps;
            let keep = k == k0 || k == k1 || !coin(&mut rng, camera.dropout);
            let flip = coin(&mut rng, camera.vote_flip);
            if !keep {
                continue;
            }
            let class_vote = match (e.class, flip) {
                (c, false) => c,
                (VehicleClass::Light, true) => VehicleClass::Heavy,
                (VehicleClass::Heavy, true) => VehicleClass::Light,
            };
            let pixel = project_to_pixel(&camera.world_to_pixel, WorldPoint::new(x, (t - e.t_entry) * v))?;
            frames.push(TrackFrame { t, pixel, class_vote });
        }
        tracks.push(RawTrack { id: e.id, frames });
    }
    Ok(tracks)
}
