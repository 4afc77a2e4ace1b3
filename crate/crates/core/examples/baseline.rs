//! Peak-counting baseline on two simulated hours: default thresholds, then
//! boundaries calibrated on the first hour and scored on the second.

use bridgeflow::baseline::{calibrate_thresholds, count_hourly, threshold_grid, PeakConfig, GRID_STEP};
use bridgeflow::dsp::{preprocess_channel, PreprocessConfig};
use bridgeflow::metrics::{hourly_truth, metrics_report};
use bridgeflow::simgen::{simulate, Scenario};
use bridgeflow::stages::slice_record;
use bridgeflow::{LaneId, SignalRecord};

fn main() -> bridgeflow::Result<()> {
    let mut scenario = Scenario::default();
    scenario.render.accel_rate = None;
    let sim = simulate(&scenario, 2.0, 4)?;
    let events = sim.events();
    let cfg = PreprocessConfig::default();
    let strain = sim
        .signals
        .strain
        .iter()
        .map(|r| preprocess_channel(r, &cfg))
        .collect::<bridgeflow::Result<Vec<_>>>()?;
    let part = |a: f64, b: f64| -> Vec<SignalRecord> {
        strain.iter().map(|r| slice_record(r, Some(a), Some(b))).collect()
    };
    let (fit_part, test_part) = (part(0.0, 3600.0), part(3600.0, 7200.0));

    let base = PeakConfig::default();
    let (lo, hi) = base.amplitude_range();
    let fitted = calibrate_thresholds(&fit_part, &events, &threshold_grid(lo, hi, GRID_STEP), &base)?;
    for lane in [LaneId::RightSlow, LaneId::LeftOvertaking] {
        println!("{lane:?}: boundary {:.3} -> {:.3}", base.lane(lane).boundary(), fitted.lane(lane).boundary());
    }

    let truth = hourly_truth(&events, 3600.0, 1)?;
    for (name, peaks) in [("default", &base), ("calibrated", &fitted)] {
        let counted = count_hourly(&test_part, peaks)?;
        println!("{name}:");
        for m in metrics_report(&counted, &truth)? {
            println!("  {:12} MAE {:7.2}  accuracy {:.3}", m.category, m.mae, m.accuracy);
        }
    }
    Ok(())
}
