//! Half an hour of synthetic traffic on the default bridge: vehicle counts,
//! per-sensor peak strain and the headway-thinned lane rates.

use bridgeflow::simgen::{simulate, Scenario};
use bridgeflow::TrafficCategory;

fn main() -> bridgeflow::Result<()> {
    let mut scenario = Scenario::default();
    scenario.render.accel_rate = None;
    let sim = simulate(&scenario, 0.5, 7)?;

    let mut counts = [0usize; 4];
    for v in &sim.vehicles {
        counts[v.event.category().index()] += 1;
    }
    for c in TrafficCategory::ALL {
        println!(
            "{:12} {:5} vehicles  (nominal {:.0}/h)",
            c.column(),
            counts[c.index()],
            scenario.traffic.hourly_rate[c.index()]
        );
    }

    for r in &sim.signals.strain {
        let peak = r.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("sensor {:2}: {} samples at {} Hz, peak |strain| {:.3e}", r.sensor_id, r.samples.len(), r.sample_rate, peak);
    }
    Ok(())
}
