//! The file-based pipeline stages behind the command-line tool.
//!
//! Every stage reads its inputs from disk, writes its outputs into one
//! directory together with a `manifest.json` of content hashes, and is a
//! pure function of its inputs, the run configuration and the seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baseline::{calibrate_thresholds, count_hourly, threshold_grid, GRID_STEP};
use crate::config::RunConfig;
use crate::dsp::{preprocess_channel, window_segments, PreprocessConfig, WindowMode};
use crate::error::{Error, Result};
use crate::geolabel::{
    assign_fractional_labels, convert_tracks, relabel_by_axles, reprojection_rms, solve_homography,
    synchronize_event, WindowGrid,
};
use crate::io::{self, LabelRow, Manifest, SignalShard};
use crate::metrics::{hourly_aggregate, hourly_truth, metrics_report, CategoryMetrics, HourlySeries, HOUR};
use crate::nets::{FeatureNorm, Model, ModelConfig};
use crate::partition::random_split;
use crate::simgen::{camera_event, simulate as run_simulation, synthesize_tracks};
use crate::train::{fit, par_map_ordered, predict_parallel, worker_count, TrainReport};
use crate::types::{CategoryCounts, SensorModality, SignalRecord, VehicleEvent, WindowSample};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const CONTROL_POINTS_FILE: &str = "control_points.csv";
pub const HOMOGRAPHY_FILE: &str = "homography.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const WINDOWS_FILE: &str = "windows.csv";
pub const CHECKPOINT_STEM: &str = "model";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";

const PREDICT_CHUNK: usize = 128;

/// File stem of a modality's signal shard, e.g. `strain.bfsg`.
pub fn modality_stem(m: SensorModality) -> &'static str {
    match m {
        SensorModality::Acceleration => "accel",
        SensorModality::Strain => "strain",
    }
}

/// Hash identifying a preprocessing setup: the config plus the ordered
/// input modalities.
pub fn preprocess_hash(cfg: &PreprocessConfig, inputs: &[SensorModality]) -> String {
    let canonical = json!({ "preprocess": cfg, "inputs": inputs });
    io::sha256_hex(canonical.to_string().as_bytes())
}

fn write_manifest(dir: &Path, kind: &str, files: &[&str], meta: serde_json::Value) -> Result<Manifest> {
    let mut m = Manifest::new(kind, meta);
    for f in files {
        m.add(dir, f)?;
    }
    io::write_json(&io::manifest_path(dir), &m)?;
    Ok(m)
}

fn read_manifest(dir: &Path, kind: &str) -> Result<Manifest> {
    let path = io::manifest_path(dir);
    let m: Manifest = io::read_json(&path)?;
    if m.kind != kind {
        return Err(Error::schema(path, format!("expected a {kind} manifest, found {:?}", m.kind)));
    }
    m.verify(dir)?;
    Ok(m)
}

fn meta_field<T: serde::de::DeserializeOwned>(m: &Manifest, dir: &Path, key: &str) -> Result<T> {
    let v = m
        .meta
        .get(key)
        .cloned()
        .ok_or_else(|| Error::schema(io::manifest_path(dir), format!("meta.{key} missing")))?;
    serde_json::from_value(v).map_err(|e| Error::schema(io::manifest_path(dir), format!("meta.{key}: {e}")))
}

// Signals

/// Raw signals for each modality in `inputs`, in order.
///
/// `path` is either a directory holding `<stem>.bfsg` or `<stem>.csv` per
/// modality, or a single signal file when only one modality is needed.
pub fn load_signals(path: &Path, inputs: &[SensorModality]) -> Result<Vec<SignalShard>> {
    if path.is_dir() {
        inputs
            .iter()
            .map(|&m| {
                let stem = path.join(modality_stem(m));
                let bin = stem.with_extension("bfsg");
                if bin.exists() {
                    return io::read_shard(&bin);
                }
                let csv = stem.with_extension("csv");
                if csv.exists() {
                    return io::read_signals_csv(&csv, m);
                }
                Err(Error::FileMissing(bin))
            })
            .collect()
    } else {
        match inputs {
            [m] => Ok(vec![io::read_signals(path, *m)?]),
            _ => Err(Error::config(
                "inputs",
                format!("{} modalities need a signal directory, got the file {}", inputs.len(), path.display()),
            )),
        }
    }
}

/// Samples of `r` whose timestamps fall in `[start, end)`.
pub fn slice_record(r: &SignalRecord, start: Option<f64>, end: Option<f64>) -> SignalRecord {
    let n = r.samples.len();
    let idx = |t: f64| (((t - r.t0) * r.sample_rate).round().max(0.0) as usize).min(n);
    let a = start.map(idx).unwrap_or(0);
    let b = end.map(idx).unwrap_or(n).max(a);
    SignalRecord {
        t0: r.t0 + a as f64 / r.sample_rate,
        ..r.with_samples(r.samples[a..b].to_vec())
    }
}

fn preprocess_shard(shard: &SignalShard, cfg: &PreprocessConfig, span: (Option<f64>, Option<f64>)) -> Result<SignalShard> {
    if shard.preprocessed {
        return Err(Error::Invalid("signals are already preprocessed".into()));
    }
    let sliced: Vec<SignalRecord> = shard.records.iter().map(|r| slice_record(r, span.0, span.1)).collect();
    let done = par_map_ordered(sliced.len(), worker_count(), |i| preprocess_channel(&sliced[i], cfg));
    SignalShard::new(shard.modality, true, done.into_iter().collect::<Result<_>>()?)
}

/// Arrange shards as `[node][channel]`, node `i` being the sensor with the
/// `i`-th smallest id.
fn node_channels(shards: &[SignalShard]) -> Result<Vec<Vec<SignalRecord>>> {
    let first = shards.first().ok_or_else(|| Error::config("inputs", "need at least one modality"))?;
    let mut ids = first.sensor_ids();
    ids.sort_unstable();
    let mut nodes = vec![Vec::with_capacity(shards.len()); ids.len()];
    for s in shards {
        let mut own = s.sensor_ids();
        own.sort_unstable();
        if own != ids {
            return Err(Error::MisalignedChannels(format!(
                "{:?} sensors {own:?} differ from {:?} sensors {ids:?}",
                s.modality, first.modality
            )));
        }
        for (node, id) in ids.iter().enumerate() {
            let r = s.records.iter().find(|r| r.sensor_id == *id).expect("id present");
            nodes[node].push(r.clone());
        }
    }
    Ok(nodes)
}

fn grid_of(windows: &[WindowSample], cfg: &PreprocessConfig, mode: WindowMode) -> WindowGrid {
    WindowGrid {
        start: windows.first().map(|w| w.start_time).unwrap_or(0.0),
        len: cfg.window,
        stride: cfg.stride(mode),
        count: windows.len(),
    }
}

/// Hours lying entirely inside the span of `grid`.
pub fn full_hours(series: &HourlySeries, grid: &WindowGrid) -> HourlySeries {
    let end = grid.start + grid.stride * grid.count.saturating_sub(1) as f64 + grid.len;
    series.filter(|h| h >= grid.start - 1e-9 && h + HOUR <= end + 1e-9)
}

// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub vehicles: usize,
    pub tracks: usize,
    pub hours: f64,
}

/// Synthetic run: sensor shards for every rendered modality, ground-truth
/// sensor-plane events, camera tracks and camera control points.
pub fn simulate(cfg: &RunConfig, hours: f64, seed: u64, out: &Path) -> Result<SimulateSummary> {
    if !(hours > 0.0 && hours.is_finite()) {
        return Err(Error::config("hours", format!("must be > 0, got {hours}")));
    }
    io::ensure_dir(out)?;
    let sim = run_simulation(&cfg.scenario, hours, seed)?;
    let mut files = Vec::new();
    for (m, recs) in [
        (SensorModality::Strain, &sim.signals.strain),
        (SensorModality::Acceleration, &sim.signals.accel),
    ] {
        if recs.is_empty() {
            continue;
        }
        let name = format!("{}.bfsg", modality_stem(m));
        io::write_shard(&out.join(&name), &SignalShard::new(m, false, recs.clone())?)?;
        files.push(name);
    }
    let events = sim.events();
    io::write_events(&out.join(EVENTS_FILE), &events)?;
    let cam: Vec<VehicleEvent> = events.iter().map(|e| camera_event(e, &cfg.plane)).collect();
    let tracks = synthesize_tracks(&cam, &cfg.scenario.camera, &cfg.plane, seed)?;
    io::write_tracks(&out.join(TRACKS_FILE), &tracks)?;
    io::write_control_points(&out.join(CONTROL_POINTS_FILE), &cfg.scenario.camera.control_points(&cfg.plane)?)?;
    files.extend([EVENTS_FILE, TRACKS_FILE, CONTROL_POINTS_FILE].map(String::from));
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    write_manifest(out, "simulation", &names, json!({ "hours": hours, "seed": seed, "scenario": cfg.scenario }))?;
    Ok(SimulateSummary {
        vehicles: events.len(),
        tracks: tracks.len(),
        hours,
    })
}

// calibrate-camera

/// Homography from a control-point file; returns the reprojection RMS in
/// pixels.
pub fn calibrate_camera(points: &Path, out: &Path) -> Result<f64> {
    let pairs = io::read_control_points(points)?;
    let h = solve_homography(&pairs)?;
    let rms = reprojection_rms(&h, &pairs)?;
    io::ensure_dir(out)?;
    io::write_homography(&out.join(HOMOGRAPHY_FILE), &h, Some(rms))?;
    write_manifest(out, "homography", &[HOMOGRAPHY_FILE], json!({ "points": points.display().to_string() }))?;
    Ok(rms)
}

// label

/// Where a label stage finds its vehicles.
#[derive(Debug, Clone)]
pub enum LabelSource {
    /// Sensor-plane events, used as they are.
    Events(PathBuf),
    /// Camera tracks, projected with the homography and shifted back to the
    /// sensor section.
    Tracks { tracks: PathBuf, homography: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub events: usize,
    pub windows: usize,
    pub discarded_tracks: usize,
}

/// Sensor-plane events from either label source, axle-relabeled.
pub fn resolve_events(source: &LabelSource, cfg: &RunConfig) -> Result<(Vec<VehicleEvent>, usize)> {
    let (events, discarded) = match source {
        LabelSource::Events(p) => (io::read_events(p)?, 0),
        LabelSource::Tracks { tracks, homography } => {
            let h = io::read_homography(homography)?;
            let conv = convert_tracks(&io::read_tracks(tracks)?, &h, &cfg.plane);
            let discarded = conv.too_short + conv.out_of_lane + conv.bad_motion;
            let synced = conv.events.iter().map(|e| synchronize_event(e, &cfg.plane)).collect();
            (synced, discarded)
        }
    };
    Ok((events.iter().map(relabel_by_axles).collect(), discarded))
}

/// Fractional window labels over `[start, end)`; the span defaults to the
/// whole hours touched by the events.
pub fn label(
    source: &LabelSource,
    cfg: &RunConfig,
    mode: WindowMode,
    span: (Option<f64>, Option<f64>),
    out: &Path,
) -> Result<LabelSummary> {
    let (events, discarded) = resolve_events(source, cfg)?;
    let lo = events.iter().map(|e| e.t_entry).fold(f64::INFINITY, f64::min);
    let hi = events.iter().map(|e| e.t_exit).fold(f64::NEG_INFINITY, f64::max);
    let start = span.0.unwrap_or((lo / HOUR).floor() * HOUR);
    let end = span.1.unwrap_or((hi / HOUR).ceil() * HOUR);
    if !(start.is_finite() && end.is_finite()) {
        return Err(Error::NoGroundTruth("no events and no explicit span".into()));
    }
    let pre = &cfg.preprocess;
    let count = if end - start >= pre.window {
        ((end - start - pre.window) / pre.stride(mode) + 1e-9).floor() as usize + 1
    } else {
        0
    };
    let grid = WindowGrid {
        start,
        len: pre.window,
        stride: pre.stride(mode),
        count,
    };
    let labels = assign_fractional_labels(&events, &grid)?;
    let rows: Vec<LabelRow> = grid.starts().zip(&labels).map(|(t, c)| LabelRow::new(t, *c)).collect();
    io::ensure_dir(out)?;
    io::write_labels(&out.join(LABELS_FILE), &rows)?;
    io::write_events(&out.join(EVENTS_FILE), &events)?;
    write_manifest(out, "labels", &[LABELS_FILE, EVENTS_FILE], json!({ "mode": mode, "grid": grid_json(&grid) }))?;
    Ok(LabelSummary {
        events: events.len(),
        windows: rows.len(),
        discarded_tracks: discarded,
    })
}

fn grid_json(g: &WindowGrid) -> serde_json::Value {
    json!({ "start": g.start, "len": g.len, "stride": g.stride, "count": g.count })
}

// preprocess

/// Where window labels come from when preprocessing.
#[derive(Debug, Clone)]
pub enum LabelInput {
    None,
    /// A labels CSV whose rows match the window starts.
    Labels(PathBuf),
    /// Sensor-plane events, labeled on the fly.
    Events(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub windows: usize,
    pub labeled: bool,
    pub preprocess_hash: String,
}

/// Preprocess raw signals for the configured inputs, cut them into windows
/// and store the dataset.
pub fn preprocess(
    signals: &Path,
    cfg: &RunConfig,
    mode: WindowMode,
    span: (Option<f64>, Option<f64>),
    labels: &LabelInput,
    out: &Path,
) -> Result<PreprocessSummary> {
    let raw = load_signals(signals, &cfg.inputs)?;
    let shards = raw
        .iter()
        .map(|s| preprocess_shard(s, &cfg.preprocess, span))
        .collect::<Result<Vec<_>>>()?;
    let windows = window_segments(&node_channels(&shards)?, &cfg.preprocess, mode)?;
    let grid = grid_of(&windows, &cfg.preprocess, mode);
    let (rows, labeled) = match labels {
        LabelInput::None => (vec![[0.0; 4]; windows.len()], false),
        LabelInput::Events(p) => (assign_fractional_labels(&io::read_events(p)?, &grid)?, true),
        LabelInput::Labels(p) => (match_labels(p, &windows)?, true),
    };
    io::ensure_dir(out)?;
    let mut files = Vec::new();
    for s in &shards {
        let name = format!("{}.bfsg", modality_stem(s.modality));
        io::write_shard(&out.join(&name), s)?;
        files.push(name);
    }
    let label_rows: Vec<LabelRow> = windows.iter().zip(&rows).map(|(w, c)| LabelRow::new(w.start_time, *c)).collect();
    io::write_labels(&out.join(WINDOWS_FILE), &label_rows)?;
    files.push(WINDOWS_FILE.to_owned());
    let hash = preprocess_hash(&cfg.preprocess, &cfg.inputs);
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    write_manifest(
        out,
        "dataset",
        &names,
        json!({
            "mode": mode,
            "labeled": labeled,
            "inputs": cfg.inputs,
            "preprocess": cfg.preprocess,
            "preprocess_hash": hash,
            "grid": grid_json(&grid),
        }),
    )?;
    Ok(PreprocessSummary {
        windows: windows.len(),
        labeled,
        preprocess_hash: hash,
    })
}

fn match_labels(path: &Path, windows: &[WindowSample]) -> Result<Vec<CategoryCounts>> {
    let rows = io::read_labels(path)?;
    let mut out = Vec::with_capacity(windows.len());
    let mut j = 0;
    for w in windows {
        while j < rows.len() && rows[j].window_start < w.start_time - 1e-6 {
            j += 1;
        }
        match rows.get(j) {
            Some(r) if (r.window_start - w.start_time).abs() <= 1e-6 => out.push(r.counts()),
            _ => return Err(Error::schema(path, format!("no label row for the window starting at {}", w.start_time))),
        }
    }
    Ok(out)
}

/// A stored dataset, loaded back into windows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<WindowSample>,
    pub grid: WindowGrid,
    pub mode: WindowMode,
    pub labeled: bool,
    pub inputs: Vec<SensorModality>,
    pub preprocess: PreprocessConfig,
    pub preprocess_hash: String,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir, "dataset")?;
    let mode: WindowMode = meta_field(&m, dir, "mode")?;
    let inputs: Vec<SensorModality> = meta_field(&m, dir, "inputs")?;
    let preprocess: PreprocessConfig = meta_field(&m, dir, "preprocess")?;
    let hash: String = meta_field(&m, dir, "preprocess_hash")?;
    if preprocess_hash(&preprocess, &inputs) != hash {
        return Err(Error::schema(io::manifest_path(dir), "preprocess_hash does not match the recorded config"));
    }
    let shards = inputs
        .iter()
        .map(|&mo| io::read_shard(&dir.join(format!("{}.bfsg", modality_stem(mo)))))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = window_segments(&node_channels(&shards)?, &preprocess, mode)?;
    let rows = io::read_labels(&dir.join(WINDOWS_FILE))?;
    if rows.len() != samples.len() {
        return Err(Error::schema(
            dir.join(WINDOWS_FILE),
            format!("{} label rows for {} windows", rows.len(), samples.len()),
        ));
    }
    for (s, r) in samples.iter_mut().zip(&rows) {
        s.label = r.counts();
    }
    let grid = grid_of(&samples, &preprocess, mode);
    Ok(Dataset {
        samples,
        grid,
        mode,
        labeled: meta_field(&m, dir, "labeled")?,
        inputs,
        preprocess,
        preprocess_hash: hash,
    })
}

// train

/// Everything besides the weights that inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: String,
    pub model: ModelConfig,
    pub feature_norm: Option<FeatureNorm>,
    pub log_vars: CategoryCounts,
    pub inputs: Vec<SensorModality>,
    pub preprocess: PreprocessConfig,
    pub preprocess_hash: String,
    pub seed: u64,
}

/// Fit the configured model on a labeled training dataset.
pub fn train(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let ds = load_dataset(dataset)?;
    if !ds.labeled {
        return Err(Error::schema(io::manifest_path(dataset), "training needs a labeled dataset"));
    }
    if ds.inputs != cfg.inputs {
        return Err(Error::config(
            "inputs",
            format!("config lists {:?} but the dataset holds {:?}", cfg.inputs, ds.inputs),
        ));
    }
    let (tr, va) = random_split(ds.samples, cfg.train.train_fraction, cfg.seed)?;
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let outcome = fit(model, &tr, &va, &cfg.train, ds.preprocess.augment_variance, cfg.seed)?;
    let meta = CheckpointMeta {
        variant: outcome.model.variant().to_string(),
        model: outcome.model.config.clone(),
        feature_norm: outcome.model.feature_norm.clone(),
        log_vars: outcome.uncertainty.s,
        inputs: ds.inputs,
        preprocess: ds.preprocess,
        preprocess_hash: ds.preprocess_hash,
        seed: cfg.seed,
    };
    save_checkpoint(out, &outcome.model, &meta, &outcome.report)?;
    Ok(outcome.report)
}

pub fn save_checkpoint(out: &Path, model: &Model, meta: &CheckpointMeta, report: &TrainReport) -> Result<()> {
    io::ensure_dir(out)?;
    model.params.save(&out.join(CHECKPOINT_STEM), &serde_json::to_value(meta)?)?;
    io::write_json(&out.join(TRAIN_REPORT_FILE), report)?;
    write_manifest(
        out,
        "checkpoint",
        &["model.json", "model.bin", TRAIN_REPORT_FILE],
        json!({ "variant": meta.variant, "preprocess_hash": meta.preprocess_hash }),
    )?;
    Ok(())
}

/// A checkpoint directory back into a model.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointMeta)> {
    read_manifest(dir, "checkpoint")?;
    let stem = dir.join(CHECKPOINT_STEM);
    let (params, meta) = crate::tensor::ParamSet::load(&stem)?;
    let meta: CheckpointMeta =
        serde_json::from_value(meta).map_err(|e| Error::schema(stem.with_extension("json"), e.to_string()))?;
    let mut model = Model::new(meta.model.clone(), 0)?;
    if model.params.names() != params.names() {
        return Err(Error::schema(stem.with_extension("json"), "parameter names do not match the model config"));
    }
    for (a, b) in model.params.tensors().iter().zip(params.tensors()) {
        if a.shape() != b.shape() {
            return Err(Error::schema(stem.with_extension("json"), "parameter shapes do not match the model config"));
        }
    }
    model.params = params;
    model.feature_norm = meta.feature_norm.clone();
    Ok((model, meta))
}

// evaluate

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Vec<CategoryMetrics>,
    pub predicted: HourlySeries,
    pub truth: HourlySeries,
}

/// Hourly predictions over the whole hours a window grid covers.
pub fn predict_hourly(model: &Model, samples: &[WindowSample], grid: &WindowGrid) -> Result<HourlySeries> {
    let pred = predict_parallel(model, samples, PREDICT_CHUNK, worker_count())?;
    Ok(full_hours(&hourly_aggregate(&pred, grid)?, grid))
}

/// Truth as sensor-plane events (`.jsonl`) or an hourly-counts CSV.
pub fn load_truth(path: &Path, hours: &HourlySeries) -> Result<HourlySeries> {
    let Some(first) = hours.hours.first() else {
        return Ok(HourlySeries::default());
    };
    if path.extension().is_some_and(|e| e == "jsonl") {
        return hourly_truth(&io::read_events(path)?, first.start, hours.len());
    }
    let table = io::read_hourly(path)?;
    let mut out = HourlySeries::default();
    for h in &hours.hours {
        let bin = table
            .hours
            .iter()
            .find(|b| (b.start - h.start).abs() < 0.5)
            .ok_or_else(|| Error::schema(path, format!("no row for hour {}", io::iso_hour(h.start))))?;
        out.hours.push(*bin);
    }
    Ok(out)
}

/// Score a checkpoint on a dataset against ground truth. Refuses datasets
/// preprocessed differently from the checkpoint's training data.
pub fn evaluate(checkpoint: &Path, dataset: &Path, truth: &Path, out: &Path) -> Result<Evaluation> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let ds = load_dataset(dataset)?;
    if ds.preprocess_hash != meta.preprocess_hash {
        return Err(Error::schema(
            io::manifest_path(dataset),
            format!(
                "dataset preprocess_hash {} differs from the checkpoint's {}",
                ds.preprocess_hash, meta.preprocess_hash
            ),
        ));
    }
    let predicted = predict_hourly(&model, &ds.samples, &ds.grid)?;
    if predicted.is_empty() {
        return Err(Error::Invalid("dataset covers no whole hour".into()));
    }
    let truth = load_truth(truth, &predicted)?;
    let metrics = metrics_report(&predicted, &truth)?;
    io::ensure_dir(out)?;
    io::write_metrics(&out.join(METRICS_FILE), &metrics)?;
    io::write_hourly_comparison(&out.join(HOURLY_FILE), &predicted, &truth)?;
    write_manifest(out, "evaluation", &[METRICS_FILE, HOURLY_FILE], json!({ "variant": meta.variant }))?;
    Ok(Evaluation {
        metrics,
        predicted,
        truth,
    })
}

// infer

/// Camera-free inference: a checkpoint and raw signals in, hourly counts
/// out.
pub fn infer(checkpoint: &Path, signals: &Path, span: (Option<f64>, Option<f64>), out: &Path) -> Result<HourlySeries> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let raw = load_signals(signals, &meta.inputs)?;
    let shards = raw
        .iter()
        .map(|s| preprocess_shard(s, &meta.preprocess, span))
        .collect::<Result<Vec<_>>>()?;
    let windows = window_segments(&node_channels(&shards)?, &meta.preprocess, WindowMode::Test)?;
    let grid = grid_of(&windows, &meta.preprocess, WindowMode::Test);
    let series = predict_hourly(&model, &windows, &grid)?;
    io::ensure_dir(out)?;
    io::write_hourly(&out.join(HOURLY_FILE), &series)?;
    Ok(series)
}

// baseline

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub series: HourlySeries,
    pub metrics: Option<Vec<CategoryMetrics>>,
    pub config: RunConfig,
}

/// Peak-counting baseline on preprocessed strain. With `calibrate`, the
/// class boundaries are first fitted to `events` and the updated run
/// config is written next to the counts.
pub fn baseline(
    signals: &Path,
    events: Option<&Path>,
    calibrate: bool,
    cfg: &RunConfig,
    span: (Option<f64>, Option<f64>),
    out: &Path,
) -> Result<BaselineRun> {
    let raw = load_signals(signals, &[SensorModality::Strain])?;
    let strain = preprocess_shard(&raw[0], &cfg.preprocess, span)?.records;
    let events = events.map(io::read_events).transpose()?;
    let mut config = cfg.clone();
    if calibrate {
        let ev = events
            .as_deref()
            .ok_or_else(|| Error::NoGroundTruth("calibration needs --events".into()))?;
        let grid = threshold_grid(0.0, 1.0, GRID_STEP);
        config.baseline = calibrate_thresholds(&strain, ev, &grid, &cfg.baseline)?;
    }
    let series = count_hourly(&strain, &config.baseline)?;
    io::ensure_dir(out)?;
    io::write_hourly(&out.join(HOURLY_FILE), &series)?;
    let mut files = vec![HOURLY_FILE];
    let metrics = match &events {
        Some(ev) => {
            let first = series.hours.first().map(|h| h.start).unwrap_or(0.0);
            let truth = hourly_truth(ev, first, series.len())?;
            let m = metrics_report(&series, &truth)?;
            io::write_metrics(&out.join(METRICS_FILE), &m)?;
            files.push(METRICS_FILE);
            Some(m)
        }
        None => None,
    };
    if calibrate {
        io::write_atomic(&out.join(CONFIG_FILE), config.to_toml()?.as_bytes())?;
        files.push(CONFIG_FILE);
    }
    write_manifest(out, "baseline", &files, json!({ "calibrated": calibrate }))?;
    Ok(BaselineRun {
        series,
        metrics,
        config,
    })
}
