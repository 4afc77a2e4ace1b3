//! Synthetic traffic and bridge responses against closed-form expectations.

use bridgeflow::simgen::{sample_traffic, sample_traffic_counts, simulate, Scenario, TrafficModel};
use bridgeflow::{LaneId, TrafficCategory, VehicleClass};
use proptest::prelude::*;

/// Poisson arrivals at rate `λ` thinned so kept arrivals are at least `h`
/// apart form a renewal process with mean gap `1/λ + h`.
fn thinned_rate(lambda: f64, h: f64) -> f64 {
    lambda / (1.0 + lambda * h)
}

fn lane_rate(m: &TrafficModel, lane: LaneId) -> f64 {
    TrafficCategory::ALL
        .iter()
        .filter(|c| c.lane == lane)
        .map(|c| m.hourly_rate[c.index()] / 3600.0)
        .sum()
}

#[test]
fn realized_lane_volumes_follow_the_thinned_rate() {
    let m = TrafficModel::default();
    let hours = 200.0;
    let counts = sample_traffic_counts(&m, hours * 3600.0, 11).unwrap();
    for lane in LaneId::ALL {
        let lambda = lane_rate(&m, lane);
        let expected = thinned_rate(lambda, m.min_headway) * hours * 3600.0;
        let got: u64 = TrafficCategory::ALL
            .iter()
            .filter(|c| c.lane == lane)
            .map(|c| counts[c.index()])
            .sum();
        // a renewal count has variance below the Poisson one; 5σ is generous
        assert!((got as f64 - expected).abs() < 5.0 * expected.sqrt(), "{lane:?}: {got} vs {expected:.0}");
    }
}

#[test]
fn thinning_keeps_the_class_mix_within_a_lane() {
    let m = TrafficModel::default();
    let counts = sample_traffic_counts(&m, 100.0 * 3600.0, 5).unwrap();
    let (lr, hr) = (counts[0] as f64, counts[2] as f64);
    let expected = m.hourly_rate[2] / (m.hourly_rate[0] + m.hourly_rate[2]);
    let share = hr / (lr + hr);
    let sigma = (expected * (1.0 - expected) / (lr + hr)).sqrt();
    assert!((share - expected).abs() < 5.0 * sigma, "{share} vs {expected}");
}

#[test]
fn counting_shortcut_agrees_with_full_sampling() {
    let m = TrafficModel::default();
    let events = sample_traffic(&m, 0.0, 3.0 * 3600.0, 8).unwrap();
    let mut direct = [0u64; 4];
    for v in &events {
        direct[v.event.category().index()] += 1;
    }
    assert_eq!(direct, sample_traffic_counts(&m, 3.0 * 3600.0, 8).unwrap());
}

#[test]
fn heavy_left_is_rare() {
    let counts = sample_traffic_counts(&TrafficModel::default(), 1000.0 * 3600.0, 2).unwrap();
    let total: u64 = counts.iter().sum();
    assert!((counts[3] as f64) / (total as f64) < 1e-3);
    assert!(counts[3] > 0);
}

#[test]
fn events_are_consistent_with_their_speed() {
    let m = TrafficModel::default();
    for v in sample_traffic(&m, 100.0, 1800.0, 3).unwrap() {
        let e = &v.event;
        assert!((e.dwell() - m.plane_length / e.speed_ms()).abs() < 1e-9);
        assert!(e.t_entry >= 100.0 && e.t_entry < 1900.0);
        let heavy = e.class == VehicleClass::Heavy;
        assert_eq!(e.axle_count.unwrap() >= 3, heavy);
        assert!(v.weight > 0.0);
    }
}

#[test]
fn simulation_is_reproducible_and_seed_sensitive() {
    let mut sc = Scenario::default();
    sc.render.accel_rate = None;
    let a = simulate(&sc, 0.1, 4).unwrap();
    let b = simulate(&sc, 0.1, 4).unwrap();
    let c = simulate(&sc, 0.1, 5).unwrap();
    assert_eq!(a.events(), b.events());
    assert_eq!(a.signals.strain, b.signals.strain);
    assert_ne!(a.events(), c.events());
    assert!(a.signals.accel.is_empty());
    assert_eq!(a.signals.strain.len(), sc.bridge.nodes.len());
    for r in &a.signals.strain {
        assert_eq!(r.samples.len(), 36_000);
        assert_eq!(r.sample_rate, 100.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_lane_arrivals_respect_the_headway(seed in any::<u64>()) {
        let m = TrafficModel::default();
        let events = sample_traffic(&m, 0.0, 900.0, seed).unwrap();
        for lane in LaneId::ALL {
            let t: Vec<f64> = events.iter().filter(|v| v.event.lane == lane).map(|v| v.event.t_entry).collect();
            prop_assert!(t.windows(2).all(|w| w[1] - w[0] >= m.min_headway));
        }
    }
}
