//! A short training run: simulate an hour, label windows from the true
//! events, fit a small feature MLP and print the epoch log.

use bridgeflow::config::RunConfig;
use bridgeflow::dsp::WindowMode;
use bridgeflow::nets::{Model, MlpConfig, Variant};
use bridgeflow::partition::random_split;
use bridgeflow::stages::{self, LabelInput};
use bridgeflow::train::{fit, lr_at};

fn main() -> bridgeflow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut cfg = RunConfig::default();
    cfg.scenario.render.accel_rate = None;
    cfg.model.variant = Variant::FeMlp;
    cfg.model.mlp = MlpConfig { hidden: vec![64], dropout: 0.0 };
    cfg.train.max_epochs = 8;
    cfg.train.warmup_epochs = 2;
    cfg.train.cycle_epochs = 6;
    cfg.train.batch = 64;

    let sim = dir.path().join("sim");
    stages::simulate(&cfg, 1.0, 11, &sim)?;
    let ds = dir.path().join("ds");
    let events = LabelInput::Events(sim.join(stages::EVENTS_FILE));
    stages::preprocess(&sim, &cfg, WindowMode::Train, (None, None), &events, &ds)?;
    let data = stages::load_dataset(&ds)?;
    let (train, val) = random_split(data.samples, cfg.train.train_fraction, cfg.seed)?;
    println!("{} training and {} validation windows", train.len(), val.len());

    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let out = fit(model, &train, &val, &cfg.train, 0.0, cfg.seed)?;
    for e in &out.report.epochs {
        println!(
            "epoch {:2}  lr {:.2e} (schedule {:.2e})  train {:8.4}  val {:8.4}",
            e.epoch,
            e.lr,
            lr_at(e.epoch, &cfg.train),
            e.train_loss,
            e.val_loss
        );
    }
    println!("best epoch {:?}, stop: {:?}", out.report.best_epoch, out.report.stop_reason);
    println!("validation MSE before training {:.4}", out.report.initial_val_mse);
    Ok(())
}
