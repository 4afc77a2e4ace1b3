//! Fractional labels, track conversion and camera synchronization.

use bridgeflow::geolabel::{
    assign_fractional_labels, convert_tracks, relabel_by_axles, solve_homography, synchronize_event, PlaneSpec,
    WindowGrid,
};
use bridgeflow::simgen::{camera_event, sample_traffic, synthesize_tracks, CameraModel, TrafficModel};
use bridgeflow::{TrafficCategory, VehicleClass, VehicleEvent};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_events(n: usize, span: f64, rng: &mut ChaCha8Rng) -> Vec<VehicleEvent> {
    (0..n)
        .map(|i| {
            let c = TrafficCategory::ALL[rng.gen_range(0..4)];
            let t = rng.gen_range(0.0..span - 20.0);
            VehicleEvent {
                id: i as u64,
                class: c.class,
                lane: c.lane,
                speed_kmh: 90.0,
                t_entry: t,
                t_exit: t + rng.gen_range(0.01..15.0),
                axle_count: None,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tiling_windows_conserve_every_vehicle(seed in any::<u64>(), len in 0.5f64..12.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = 600.0;
        let events = random_events(300, span, &mut rng);
        let grid = WindowGrid { start: 0.0, len, stride: len, count: (span / len).ceil() as usize };
        let labels = assign_fractional_labels(&events, &grid).unwrap();
        for k in 0..4 {
            let truth = events.iter().filter(|e| e.category().index() == k).count() as f64;
            let sum: f64 = labels.iter().map(|r| r[k]).sum();
            prop_assert!((sum - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_windows_count_each_vehicle_len_over_stride_times(seed in any::<u64>(), factor in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(100, 600.0, &mut rng);
        let stride = 2.5;
        let len = stride * factor as f64;
        // start early enough that every event sits inside `factor` full covers
        let grid = WindowGrid { start: -len, len, stride, count: (700.0 / stride) as usize };
        let labels = assign_fractional_labels(&events, &grid).unwrap();
        let sum: f64 = labels.iter().flatten().sum();
        prop_assert!((sum - factor as f64 * events.len() as f64).abs() < 1e-8);
    }

    #[test]
    fn labels_are_bounded_by_one_vehicle_each(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(50, 300.0, &mut rng);
        let grid = WindowGrid { start: 0.0, len: 5.0, stride: 5.0, count: 60 };
        for row in assign_fractional_labels(&events, &grid).unwrap() {
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }
}

/// Simulated vehicles seen by the camera and pushed through the whole
/// camera-side chain come back as the original sensor-plane events.
#[test]
fn camera_chain_recovers_sensor_plane_events() {
    let plane = PlaneSpec::default();
    let camera = CameraModel {
        vote_flip: 0.0,
        lateral_jitter: 0.3,
        ..CameraModel::default()
    };
    let truth: Vec<VehicleEvent> = sample_traffic(&TrafficModel::default(), 0.0, 600.0, 4)
        .unwrap()
        .into_iter()
        .map(|v| v.event)
        .collect();
    let cam: Vec<VehicleEvent> = truth.iter().map(|e| camera_event(e, &plane)).collect();
    let tracks = synthesize_tracks(&cam, &camera, &plane, 4).unwrap();
    let h = solve_homography(&camera.control_points(&plane).unwrap()).unwrap();
    let conv = convert_tracks(&tracks, &h, &plane);
    assert_eq!(conv.events.len(), truth.len());
    for (got, want) in conv.events.iter().zip(&truth) {
        let got = relabel_by_axles(&synchronize_event(got, &plane));
        assert_eq!(got.id, want.id);
        assert_eq!(got.lane, want.lane);
        assert_eq!(got.class, want.class);
        assert!((got.speed_kmh - want.speed_kmh).abs() < 1e-6 * want.speed_kmh, "{got:?} {want:?}");
        assert!((got.t_entry - want.t_entry).abs() < 1e-6);
        assert!((got.t_exit - want.t_exit).abs() < 1e-6);
    }
}

#[test]
fn axle_counts_override_camera_votes() {
    let mut e = VehicleEvent {
        id: 0,
        class: VehicleClass::Light,
        lane: bridgeflow::LaneId::RightSlow,
        speed_kmh: 80.0,
        t_entry: 0.0,
        t_exit: 1.125,
        axle_count: Some(5),
    };
    assert_eq!(relabel_by_axles(&e).class, VehicleClass::Heavy);
    e.axle_count = Some(2);
    e.class = VehicleClass::Heavy;
    assert_eq!(relabel_by_axles(&e).class, VehicleClass::Light);
}
