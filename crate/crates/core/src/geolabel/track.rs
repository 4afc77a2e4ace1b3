//! From pixel trajectories to timed vehicle events at the sensor plane.

use serde::{Deserialize, Serialize};

use super::homography::{project_to_world, HomographyMatrix, PixelPoint, WorldPoint};
use crate::error::{Error, Result};
use crate::types::{LaneId, VehicleClass, VehicleEvent};

/// Geometry of the camera's plane of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    /// Metres along the direction of travel.
    pub length: f64,
    /// `(x_min, x_max)` in metres for the right (slow) lane.
    pub right_lane_x: (f64, f64),
    /// `(x_min, x_max)` in metres for the left (overtaking) lane.
    pub left_lane_x: (f64, f64),
    /// Distance from the sensor section to the camera plane, downstream
    /// positive.
    pub offset_to_sensors: f64,
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            length: 25.0,
            right_lane_x: (0.0, 3.75),
            left_lane_x: (3.75, 7.5),
            offset_to_sensors: 35.0,
        }
    }
}

impl PlaneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::config("plane.length", "must be > 0"));
        }
        for (key, (lo, hi)) in [("plane.right_lane_x", self.right_lane_x), ("plane.left_lane_x", self.left_lane_x)] {
            if !(lo < hi) {
                return Err(Error::config(key, "x_min must be below x_max"));
            }
        }
        let (r, l) = (self.right_lane_x, self.left_lane_x);
        if r.0 < l.1 && l.0 < r.1 {
            return Err(Error::config("plane.left_lane_x", "lane bounds overlap"));
        }
        if !self.offset_to_sensors.is_finite() {
            return Err(Error::config("plane.offset_to_sensors", "must be finite"));
        }
        Ok(())
    }

    /// Lane whose half-open x interval contains `x`.
    pub fn lane_at(&self, x: f64) -> Option<LaneId> {
        let inside = |(lo, hi): (f64, f64)| x >= lo && x < hi;
        if inside(self.right_lane_x) {
            Some(LaneId::RightSlow)
        } else if inside(self.left_lane_x) {
            Some(LaneId::LeftOvertaking)
        } else {
            None
        }
    }
}

/// One detection of a tracked vehicle: bottom-midpoint pixel of its box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackFrame {
    pub t: f64,
    pub pixel: PixelPoint,
    pub class_vote: VehicleClass,
}

/// A tracker output before geometric processing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    pub id: u64,
    pub frames: Vec<TrackFrame>,
}

/// A tracked vehicle with its lane resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub frames: Vec<TrackFrame>,
    pub lane: LaneId,
}

/// Most frequent class over the frames; ties resolve to `Heavy`.
pub fn majority_vote_class(votes: impl IntoIterator<Item = VehicleClass>) -> VehicleClass {
    let (mut light, mut heavy) = (0usize, 0usize);
    for v in votes {
        match v {
            VehicleClass::Light => light += 1,
            VehicleClass::Heavy => heavy += 1,
        }
    }
    if light > heavy {
        VehicleClass::Light
    } else {
        VehicleClass::Heavy
    }
}

/// Fills detection gaps by linear interpolation at the median frame period.
///
/// A gap counts as missing frames when it exceeds 1.5 median periods.
pub fn interpolate_missing(points: &[(f64, WorldPoint)]) -> Vec<(f64, WorldPoint)> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut dts: Vec<f64> = points.windows(2).map(|w| w[1].0 - w[0].0).collect();
    dts.sort_by(f64::total_cmp);
    let period = dts[dts.len() / 2];
    if !(period > 0.0) {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        out.push(w[0]);
        let gap = t1 - t0;
        if gap > 1.5 * period {
            let missing = (gap / period).round() as usize - 1;
            for k in 1..=missing {
                let f = k as f64 / (missing + 1) as f64;
                out.push((
                    t0 + f * gap,
                    WorldPoint::new(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y)),
                ));
            }
        }
    }
    out.push(*points.last().expect("len >= 3"));
    out
}

/// `(intercept, slope)` of the least-squares line `y = a + b·t`.
fn fit_line(points: &[(f64, WorldPoint)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientTrack(format!(
            "{} projected frame(s), need 2",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1.y).sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, w) in points {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (w.y - y_mean);
    }
    if !(stt > 0.0) {
        return Err(Error::InsufficientTrack("all frames share one timestamp".into()));
    }
    let slope = sty / stt;
    Ok((y_mean - slope * t_mean, slope))
}

/// Speed along the road axis in km/h from a least-squares fit of Y against
/// time, after gap interpolation.
pub fn estimate_speed(world_track: &[(f64, WorldPoint)]) -> Result<f64> {
    let filled = interpolate_missing(world_track);
    let (_, slope) = fit_line(&filled)?;
    Ok(slope * 3.6)
}

/// Times at which the fitted motion crosses `y = 0` and `y = plane.length`.
pub fn entry_exit_times(world_track: &[(f64, WorldPoint)], plane: &PlaneSpec) -> Result<(f64, f64)> {
    let filled = interpolate_missing(world_track);
    let (a, b) = fit_line(&filled)?;
    if !(b > 0.0) {
        return Err(Error::InsufficientTrack(format!(
            "fitted speed {:.3} m/s is not positive",
            b
        )));
    }
    Ok(((0.0 - a) / b, (plane.length - a) / b))
}

/// Shifts camera-plane timestamps back to the sensor section upstream.
pub fn synchronize_event(event: &VehicleEvent, plane: &PlaneSpec) -> VehicleEvent {
    let shift = -plane.offset_to_sensors / event.speed_ms();
    VehicleEvent {
        t_entry: event.t_entry + shift,
        t_exit: event.t_exit + shift,
        ..event.clone()
    }
}

/// Heavy iff the vehicle has three or more axles; unchanged when unknown.
pub fn relabel_by_axles(event: &VehicleEvent) -> VehicleEvent {
    let class = match event.axle_count {
        Some(a) if a >= 3 => VehicleClass::Heavy,
        Some(_) => VehicleClass::Light,
        None => event.class,
    };
    VehicleEvent {
        class,
        ..event.clone()
    }
}

/// Outcome of converting a batch of tracks.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct TrackConversion {
    pub events: Vec<VehicleEvent>,
    /// Tracks with fewer than two projectable frames.
    pub too_short: usize,
    /// Tracks whose median X lies outside every lane.
    pub out_of_lane: usize,
    /// Tracks whose fitted motion is not forward.
    pub bad_motion: usize,
}

/// Projects a track onto the road plane and resolves its lane.
pub fn resolve_track(raw: &RawTrack, h: &HomographyMatrix, plane: &PlaneSpec) -> Result<(Track, Vec<(f64, WorldPoint)>)> {
    let mut world = Vec::with_capacity(raw.frames.len());
    let mut frames = Vec::with_capacity(raw.frames.len());
    for f in &raw.frames {
        if let Ok(w) = project_to_world(h, f.pixel) {
            world.push((f.t, w));
            frames.push(*f);
        }
    }
    if world.len() < 2 {
        return Err(Error::InsufficientTrack(format!("track {} projects to {} frame(s)", raw.id, world.len())));
    }
    if world.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InsufficientTrack(format!("track {} timestamps not increasing", raw.id)));
    }
    let mut xs: Vec<f64> = world.iter().map(|(_, w)| w.x).collect();
    xs.sort_by(f64::total_cmp);
    let median_x = if xs.len() % 2 == 1 {
        xs[xs.len() / 2]
    } else {
        0.5 * (xs[xs.len() / 2 - 1] + xs[xs.len() / 2])
    };
    let lane = plane
        .lane_at(median_x)
        .ok_or_else(|| Error::Invalid(format!("track {} median x {median_x:.2} m is outside both lanes", raw.id)))?;
    Ok((
        Track {
            id: raw.id,
            frames,
            lane,
        },
        world,
    ))
}

/// Track → camera-plane event (class by majority vote, no axle data).
pub fn track_to_event(raw: &RawTrack, h: &HomographyMatrix, plane: &PlaneSpec) -> Result<VehicleEvent> {
    let (track, world) = resolve_track(raw, h, plane)?;
    let speed_kmh = estimate_speed(&world)?;
    let (t_entry, t_exit) = entry_exit_times(&world, plane)?;
    Ok(VehicleEvent {
        id: track.id,
        class: majority_vote_class(track.frames.iter().map(|f| f.class_vote)),
        lane: track.lane,
        speed_kmh,
        t_entry,
        t_exit,
        axle_count: None,
    })
}

/// Converts every track, counting (rather than failing on) discarded ones.
pub fn convert_tracks(tracks: &[RawTrack], h: &HomographyMatrix, plane: &PlaneSpec) -> TrackConversion {
    let mut out = TrackConversion::default();
    for raw in tracks {
        match track_to_event(raw, h, plane) {
            Ok(e) => out.events.push(e),
            Err(Error::InsufficientTrack(msg)) if msg.contains("not positive") => out.bad_motion += 1,
            Err(Error::InsufficientTrack(_)) => out.too_short += 1,
            Err(_) => out.out_of_lane += 1,
        }
    }
    out
}
