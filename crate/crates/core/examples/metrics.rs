//! Window predictions folded into hourly counts and scored against truth.

use bridgeflow::geolabel::{assign_fractional_labels, WindowGrid};
use bridgeflow::metrics::{generalized_accuracy, hourly_aggregate, hourly_truth, mae, mae_percent, metrics_report};
use bridgeflow::simgen::{sample_traffic, TrafficModel};
use bridgeflow::VehicleEvent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bridgeflow::Result<()> {
    let hours = 3;
    let events: Vec<VehicleEvent> = sample_traffic(&TrafficModel::default(), 0.0, hours as f64 * 3600.0, 2)?
        .into_iter()
        .map(|v| v.event)
        .collect();
    let grid = WindowGrid { start: 0.0, len: 5.0, stride: 5.0, count: hours * 720 };
    let labels = assign_fractional_labels(&events, &grid)?;

    // a predictor that is right on average with 30% multiplicative noise
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy: Vec<[f64; 4]> = labels
        .iter()
        .map(|row| row.map(|v| v * (1.0 + 0.3 * (rng.gen::<f64>() * 2.0 - 1.0))))
        .collect();

    let pred = hourly_aggregate(&noisy, &grid)?;
    let truth = hourly_truth(&events, 0.0, hours)?;
    for m in metrics_report(&pred, &truth)? {
        println!(
            "{:12} MAE {:6.2}  MAE% {:5.2}  accuracy {:.4}  total {:7.1} {}",
            m.category, m.mae, m.mae_percent, m.accuracy, m.true_total, m.flag
        );
    }

    let p = [10.0, 20.0, 30.0];
    let y = [12.0, 18.0, 30.0];
    println!(
        "toy series: MAE {:.3}, MAE% {:.3}, accuracy {:.4}",
        mae(&p, &y)?,
        mae_percent(&p, &y)?,
        generalized_accuracy(&p, &y)?
    );
    Ok(())
}
