//! Fractional window labels, first from sensor-plane events and then from
//! synthetic camera tracks pushed through the homography.

use bridgeflow::geolabel::{
    assign_fractional_labels, convert_tracks, relabel_by_axles, solve_homography, synchronize_event, PlaneSpec,
    WindowGrid,
};
use bridgeflow::simgen::{camera_event, sample_traffic, synthesize_tracks, CameraModel, TrafficModel};
use bridgeflow::VehicleEvent;

fn main() -> bridgeflow::Result<()> {
    let events: Vec<VehicleEvent> = sample_traffic(&TrafficModel::default(), 0.0, 120.0, 5)?
        .into_iter()
        .map(|v| v.event)
        .collect();
    let grid = WindowGrid { start: 0.0, len: 5.0, stride: 5.0, count: 26 };
    let labels = assign_fractional_labels(&events, &grid)?;
    for (i, row) in labels.iter().enumerate().take(6) {
        println!("window {:5.1} s  {:?}", grid.start + i as f64 * grid.stride, row.map(|v| (v * 1000.0).round() / 1000.0));
    }
    let total: f64 = labels.iter().flatten().sum();
    println!("{} events, label mass {total:.6}", events.len());

    let plane = PlaneSpec::default();
    let camera = CameraModel::default();
    let seen: Vec<VehicleEvent> = events.iter().map(|e| camera_event(e, &plane)).collect();
    let tracks = synthesize_tracks(&seen, &camera, &plane, 5)?;
    let h = solve_homography(&camera.control_points(&plane)?)?;
    let conv = convert_tracks(&tracks, &h, &plane);
    let recovered: Vec<VehicleEvent> = conv
        .events
        .iter()
        .map(|e| relabel_by_axles(&synchronize_event(e, &plane)))
        .collect();
    println!(
        "{} tracks -> {} events ({} too short, {} out of lane)",
        tracks.len(),
        recovered.len(),
        conv.too_short,
        conv.out_of_lane
    );
    if let (Some(a), Some(b)) = (events.first(), recovered.first()) {
        println!("truth     {a:?}\nrecovered {b:?}");
    }
    Ok(())
}
