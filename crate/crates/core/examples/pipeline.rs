//! Every stage of the command-line pipeline, called as library functions
//! in a scratch directory: simulate, calibrate the camera, label from
//! tracks, preprocess, train, evaluate, infer from signals alone.

use bridgeflow::config::RunConfig;
use bridgeflow::dsp::WindowMode;
use bridgeflow::nets::{MlpConfig, Variant};
use bridgeflow::stages::{self, LabelInput, LabelSource};

fn main() -> bridgeflow::Result<()> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name);
    let mut cfg = RunConfig::default();
    cfg.scenario.render.accel_rate = None;
    cfg.model.variant = Variant::FeMlp;
    cfg.model.mlp = MlpConfig { hidden: vec![32], dropout: 0.0 };
    cfg.train.max_epochs = 4;
    cfg.train.warmup_epochs = 1;
    cfg.train.cycle_epochs = 3;
    cfg.train.batch = 64;
    cfg.train.augment = false;

    let sim = stages::simulate(&cfg, 2.0, cfg.seed, &p("sim"))?;
    println!("simulate: {} vehicles, {} tracks", sim.vehicles, sim.tracks);

    let rms = stages::calibrate_camera(&p("sim").join(stages::CONTROL_POINTS_FILE), &p("camera"))?;
    println!("calibrate-camera: reprojection rms {rms:.2e} px");

    let source = LabelSource::Tracks {
        tracks: p("sim").join(stages::TRACKS_FILE),
        homography: p("camera").join(stages::HOMOGRAPHY_FILE),
    };
    let labels = stages::label(&source, &cfg, WindowMode::Train, (None, Some(3600.0)), &p("labels"))?;
    println!("label: {} events over {} windows", labels.events, labels.windows);

    let lab = LabelInput::Labels(p("labels").join(stages::LABELS_FILE));
    stages::preprocess(&p("sim"), &cfg, WindowMode::Train, (None, Some(3600.0)), &lab, &p("train_ds"))?;
    let test = stages::preprocess(&p("sim"), &cfg, WindowMode::Test, (Some(3600.0), None), &LabelInput::None, &p("test_ds"))?;
    println!("preprocess: {} test windows, hash {}", test.windows, &test.preprocess_hash[..12]);

    let report = stages::train(&p("train_ds"), &cfg, &p("ck"))?;
    println!("train: {} epochs, best val loss {:.4}", report.epochs.len(), report.best_val_loss);

    let ev = stages::evaluate(&p("ck"), &p("test_ds"), &p("sim").join(stages::EVENTS_FILE), &p("eval"))?;
    for m in &ev.metrics {
        println!("evaluate: {:12} MAE {:6.2} accuracy {:.3}", m.category, m.mae, m.accuracy);
    }

    let hourly = stages::infer(&p("ck"), &p("sim"), (Some(3600.0), None), &p("infer"))?;
    for h in &hourly.hours {
        println!("infer: hour starting {} s -> {:.1?}", h.start, h.counts);
    }
    Ok(())
}
