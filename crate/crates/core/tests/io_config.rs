//! File formats and configuration round trips.

use std::fs;

use bridgeflow::config::RunConfig;
use bridgeflow::io::{
    decode_shard, encode_shard, read_control_points, read_events, read_hourly, read_labels, read_shard,
    read_signals_csv, read_tracks, write_control_points, write_events, write_hourly, write_labels, write_shard,
    write_signals_csv, write_tracks, LabelRow, Manifest, SignalShard,
};
use bridgeflow::geolabel::{PixelPoint, RawTrack, TrackFrame, WorldPoint};
use bridgeflow::metrics::HourlySeries;
use bridgeflow::{Error, LaneId, SensorModality, SignalRecord, VehicleClass, VehicleEvent};
use proptest::collection::vec;
use proptest::prelude::*;

fn shard_strategy() -> impl Strategy<Value = SignalShard> {
    (1usize..6, 1usize..80, any::<bool>(), any::<bool>(), 1.0f64..500.0, -1e4f64..1e4).prop_flat_map(
        |(n, len, strain, pre, rate, t0)| {
            vec(vec(-1e6f64..1e6, len), n).prop_map(move |cols| {
                let modality = if strain { SensorModality::Strain } else { SensorModality::Acceleration };
                let records = cols
                    .into_iter()
                    .enumerate()
                    .map(|(i, samples)| SignalRecord {
                        sensor_id: 10 * i as u32 + 3,
                        modality,
                        sample_rate: rate,
                        t0,
                        samples,
                    })
                    .collect();
                SignalShard::new(modality, pre, records).unwrap()
            })
        },
    )
}

fn event_strategy() -> impl Strategy<Value = VehicleEvent> {
    (any::<u64>(), any::<bool>(), any::<bool>(), 20.0f64..150.0, 0.0f64..1e6, 0.1f64..5.0, proptest::option::of(2u32..8))
        .prop_map(|(id, heavy, left, speed, t, dwell, axles)| VehicleEvent {
            id,
            class: if heavy { VehicleClass::Heavy } else { VehicleClass::Light },
            lane: if left { LaneId::LeftOvertaking } else { LaneId::RightSlow },
            speed_kmh: speed,
            t_entry: t,
            t_exit: t + dwell,
            axle_count: axles,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_shards_round_trip_bit_for_bit(shard in shard_strategy()) {
        let bytes = encode_shard(&shard);
        let back = decode_shard(&bytes, "mem".as_ref()).unwrap();
        prop_assert_eq!(&back, &shard);
        prop_assert_eq!(encode_shard(&back), bytes);
    }

    #[test]
    fn truncated_shards_are_schema_errors(shard in shard_strategy(), cut in 1usize..64) {
        let bytes = encode_shard(&shard);
        let short = &bytes[..bytes.len().saturating_sub(cut)];
        let bad = matches!(decode_shard(short, "mem".as_ref()), Err(Error::SchemaMismatch { .. }));
        prop_assert!(bad);
    }

    #[test]
    fn events_round_trip_through_json_lines(events in vec(event_strategy(), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.jsonl");
        write_events(&p, &events).unwrap();
        prop_assert_eq!(read_events(&p).unwrap(), events);
    }

    #[test]
    fn hourly_csv_keeps_six_decimals(counts in vec([0.0f64..1e5, 0.0f64..1e5, 0.0f64..1e3, 0.0f64..10.0], 1..30), h0 in 0u32..10_000) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hourly.csv");
        let mut s = HourlySeries::zeros(h0 as f64 * 3600.0, counts.len());
        for (h, c) in s.hours.iter_mut().zip(&counts) {
            h.counts = *c;
        }
        write_hourly(&p, &s).unwrap();
        let back = read_hourly(&p).unwrap();
        prop_assert_eq!(back.len(), s.len());
        for (a, b) in back.hours.iter().zip(&s.hours) {
            prop_assert_eq!(a.start, b.start);
            for k in 0..4 {
                prop_assert!((a.counts[k] - b.counts[k]).abs() <= 5e-7);
            }
        }
    }
}

#[test]
fn signal_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("strain.csv");
    let rec = |id: u32| SignalRecord {
        sensor_id: id,
        modality: SensorModality::Strain,
        sample_rate: 100.0,
        t0: 12.0,
        samples: (0..50).map(|i| (i as f64 * 0.1 + id as f64).sin()).collect(),
    };
    let shard = SignalShard::new(SensorModality::Strain, false, vec![rec(1), rec(2)]).unwrap();
    write_signals_csv(&p, &shard).unwrap();
    let back = read_signals_csv(&p, SensorModality::Strain).unwrap();
    assert_eq!(back.sensor_ids(), vec![1, 2]);
    assert_eq!(back.t0(), 12.0);
    assert!((back.rate() - 100.0).abs() < 1e-6);
    for (a, b) in back.records.iter().zip(&shard.records) {
        assert_eq!(a.samples, b.samples);
    }
}

#[test]
fn shard_files_reject_foreign_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.bfsg");
    fs::write(&p, b"PNG\0\0\0\0\0").unwrap();
    assert!(matches!(read_shard(&p), Err(Error::SchemaMismatch { .. })));
    assert!(matches!(read_shard(&dir.path().join("missing.bfsg")), Err(Error::FileMissing(_))));

    let rec = SignalRecord {
        sensor_id: 1,
        modality: SensorModality::Acceleration,
        sample_rate: 250.0,
        t0: 0.0,
        samples: vec![0.5; 10],
    };
    let shard = SignalShard::new(SensorModality::Acceleration, true, vec![rec]).unwrap();
    write_shard(&p, &shard).unwrap();
    assert_eq!(read_shard(&p).unwrap(), shard);
}

#[test]
fn tracks_labels_and_control_points_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tracks = vec![
        RawTrack {
            id: 4,
            frames: (0..5)
                .map(|i| TrackFrame {
                    t: i as f64 * 0.04,
                    pixel: PixelPoint::new(100.0 + i as f64, 300.5),
                    class_vote: VehicleClass::Heavy,
                })
                .collect(),
        },
        RawTrack {
            id: 9,
            frames: vec![TrackFrame {
                t: 1.0,
                pixel: PixelPoint::new(1.0, 2.0),
                class_vote: VehicleClass::Light,
            }],
        },
    ];
    let p = dir.path().join("tracks.jsonl");
    write_tracks(&p, &tracks).unwrap();
    let back = read_tracks(&p).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in back.iter().zip(&tracks) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.frames, b.frames);
    }

    let rows = vec![LabelRow::new(0.0, [0.5, 1.0, 0.0, 0.25]), LabelRow::new(5.0, [0.0; 4])];
    let p = dir.path().join("labels.csv");
    write_labels(&p, &rows).unwrap();
    assert_eq!(read_labels(&p).unwrap(), rows);

    let pairs = vec![
        (PixelPoint::new(10.0, 20.0), WorldPoint::new(0.0, 0.0)),
        (PixelPoint::new(30.5, 21.0), WorldPoint::new(1.5, -2.0)),
    ];
    let p = dir.path().join("control_points.csv");
    write_control_points(&p, &pairs).unwrap();
    assert_eq!(read_control_points(&p).unwrap(), pairs);
}

#[test]
fn manifests_catch_edited_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "one").unwrap();
    let mut m = Manifest::new("test", serde_json::json!({}));
    m.add(dir.path(), "a.txt").unwrap();
    m.verify(dir.path()).unwrap();
    fs::write(dir.path().join("a.txt"), "two").unwrap();
    assert!(matches!(m.verify(dir.path()), Err(Error::SchemaMismatch { .. })));
}

#[test]
fn config_round_trips_and_names_bad_keys() {
    let cfg = RunConfig::default();
    cfg.validate().unwrap();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

    let partial = RunConfig::from_toml("seed = 7\n[train]\nmax_epochs = 3\n").unwrap();
    assert_eq!(partial.seed, 7);
    assert_eq!(partial.train.max_epochs, 3);
    assert_eq!(partial.model, cfg.model);

    match RunConfig::from_toml("[preprocess]\nwindow_seconds = 5.0\nnot_a_key = 1\n") {
        Err(Error::ConfigInvalid { key, .. }) => assert!(key.starts_with("preprocess"), "{key}"),
        other => panic!("{other:?}"),
    }
    match RunConfig::from_toml("inputs = [\"strain\", \"strain\"]\n").and_then(|c| c.validate().map(|_| c)) {
        Err(Error::ConfigInvalid { key, .. }) => assert!(key.starts_with("inputs") || key.starts_with("model"), "{key}"),
        other => panic!("{other:?}"),
    }
}
