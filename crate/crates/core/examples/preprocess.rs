//! The signal chain on simulated strain and acceleration: stage plan per
//! modality, then the normalized series cut into model windows.

use bridgeflow::dsp::{preprocess_channel_logged, window_segments, PreprocessConfig, WindowMode};
use bridgeflow::simgen::{simulate, Scenario};

fn main() -> bridgeflow::Result<()> {
    let sim = simulate(&Scenario::default(), 0.05, 3)?;
    let cfg = PreprocessConfig::default();

    let mut nodes = Vec::new();
    for (s, a) in sim.signals.strain.iter().zip(&sim.signals.accel) {
        let (ps, plan_s) = preprocess_channel_logged(s, &cfg)?;
        let (pa, plan_a) = preprocess_channel_logged(a, &cfg)?;
        if nodes.is_empty() {
            println!("strain {} Hz: {plan_s:?}", s.sample_rate);
            println!("accel  {} Hz: {plan_a:?}", a.sample_rate);
        }
        nodes.push(vec![ps, pa]);
    }

    for mode in [WindowMode::Train, WindowMode::Test] {
        let w = window_segments(&nodes, &cfg, mode)?;
        println!(
            "{mode:?}: {} windows of shape {:?}, first at {:.1} s, second at {:.1} s",
            w.len(),
            w[0].tensor.shape(),
            w[0].start_time,
            w[1].start_time
        );
    }
    Ok(())
}
