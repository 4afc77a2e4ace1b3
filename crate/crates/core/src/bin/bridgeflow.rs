use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bridgeflow::config::RunConfig;
use bridgeflow::dsp::WindowMode;
use bridgeflow::stages::{self, LabelInput, LabelSource};
use bridgeflow::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bridgeflow", version, about = "Traffic counts from bridge sensor signals")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded numerics.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Span {
    /// Start of the time span, seconds.
    #[arg(long)]
    start: Option<f64>,
    /// End of the time span, seconds (exclusive).
    #[arg(long)]
    end: Option<f64>,
}

impl Span {
    fn get(&self) -> (Option<f64>, Option<f64>) {
        (self.start, self.end)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic signals, events, camera tracks and control points.
    Simulate {
        #[arg(long, default_value_t = 2.0)]
        hours: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Homography from pixel/world control points.
    CalibrateCamera {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fractional window labels from sensor-plane events or camera tracks.
    Label {
        #[arg(long, conflicts_with = "tracks", required_unless_present = "tracks")]
        events: Option<PathBuf>,
        #[arg(long, requires = "homography")]
        tracks: Option<PathBuf>,
        #[arg(long)]
        homography: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        mode: WindowMode,
        #[command(flatten)]
        span: Span,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess and window signals into a dataset.
    Preprocess {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long, default_value = "train")]
        mode: WindowMode,
        #[arg(long, conflicts_with = "events")]
        labels: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        span: Span,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model on a labeled dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Peak-detection counts, optionally calibrated against events.
    Baseline {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, requires = "events")]
        calibrate: bool,
        #[command(flatten)]
        span: Span,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics and hourly series of a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Sensor-plane events (.jsonl) or an hourly-counts CSV.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hourly counts from a checkpoint and signals alone.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        signals: PathBuf,
        #[command(flatten)]
        span: Span,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> bridgeflow::Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> bridgeflow::Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Simulate { hours, out } => {
            let s = stages::simulate(&cfg, hours, cfg.seed, &out)?;
            println!("simulated {} h: {} vehicles, {} tracks -> {}", s.hours, s.vehicles, s.tracks, out.display());
        }
        Command::CalibrateCamera { points, out } => {
            let rms = stages::calibrate_camera(&points, &out)?;
            println!("homography -> {} (reprojection rms {rms:.3} px)", out.display());
        }
        Command::Label {
            events,
            tracks,
            homography,
            mode,
            span,
            out,
        } => {
            let source = match (events, tracks, homography) {
                (Some(e), _, _) => LabelSource::Events(e),
                (None, Some(tracks), Some(homography)) => LabelSource::Tracks { tracks, homography },
                _ => return Err(Error::ConfigInvalid {
                    key: "label".into(),
                    reason: "give --events, or --tracks with --homography".into(),
                }),
            };
            let s = stages::label(&source, &cfg, mode, span.get(), &out)?;
            println!(
                "labeled {} windows from {} events ({} tracks discarded) -> {}",
                s.windows,
                s.events,
                s.discarded_tracks,
                out.display()
            );
        }
        Command::Preprocess {
            signals,
            mode,
            labels,
            events,
            span,
            out,
        } => {
            let labels = match (labels, events) {
                (Some(l), _) => LabelInput::Labels(l),
                (None, Some(e)) => LabelInput::Events(e),
                (None, None) => LabelInput::None,
            };
            let s = stages::preprocess(&signals, &cfg, mode, span.get(), &labels, &out)?;
            println!(
                "{} windows (labeled: {}, preprocess {}) -> {}",
                s.windows,
                s.labeled,
                &s.preprocess_hash[..12],
                out.display()
            );
        }
        Command::Train { dataset, out } => {
            let r = stages::train(&dataset, &cfg, &out)?;
            println!(
                "{} ({} params): best epoch {:?}, val loss {:.5}, stopped at {} ({:?}) -> {}",
                r.variant,
                r.param_count,
                r.best_epoch,
                r.best_val_loss,
                r.stopped_epoch,
                r.stop_reason,
                out.display()
            );
        }
        Command::Baseline {
            signals,
            events,
            calibrate,
            span,
            out,
        } => {
            let r = stages::baseline(&signals, events.as_deref(), calibrate, &cfg, span.get(), &out)?;
            println!("{} hours counted -> {}", r.series.len(), out.display());
            for m in r.metrics.iter().flatten() {
                println!("{:<12} MAE {:>9.3}  accuracy {:.4} {}", m.category, m.mae, m.accuracy, m.flag);
            }
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            truth,
            out,
        } => {
            let e = stages::evaluate(&checkpoint, &dataset, &truth, &out)?;
            for m in &e.metrics {
                println!("{:<12} MAE {:>9.3}  accuracy {:.4} {}", m.category, m.mae, m.accuracy, m.flag);
            }
        }
        Command::Infer {
            checkpoint,
            signals,
            span,
            out,
        } => {
            let s = stages::infer(&checkpoint, &signals, span.get(), &out)?;
            println!("{} hours -> {}", s.len(), out.join(stages::HOURLY_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.deterministic {
        std::env::set_var("BRIDGEFLOW_THREADS", "1");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::to_string(&e.to_string()).unwrap_or_default();
            eprintln!("error kind={} message={msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
