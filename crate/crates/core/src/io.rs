//! On-disk formats: event and track JSON lines, binary and CSV signal
//! shards, control points, homographies, window labels, hourly counts,
//! and content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geolabel::{HomographyMatrix, PixelPoint, RawTrack, TrackFrame, WorldPoint};
use crate::metrics::{CategoryMetrics, HourBin, HourlySeries};
use crate::types::{CategoryCounts, SensorModality, SignalRecord, TrafficCategory, Validate, VehicleClass, VehicleEvent};

pub use bridgeflow_tensor::params::write_atomic;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(digest)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read(path)?))
}

/// `fs::read` that reports a missing file as [`Error::FileMissing`].
pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| missing_or_io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| missing_or_io(path, e))
}

fn missing_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::FileMissing(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::FileMissing(path.to_path_buf()))
    }
}

fn json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| missing_or_io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::schema(path, format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::schema(path, e.to_string()))
}

// Events

pub fn write_events(path: &Path, events: &[VehicleEvent]) -> Result<()> {
    write_json_lines(path, events)
}

/// Reads and validates events.
pub fn read_events(path: &Path) -> Result<Vec<VehicleEvent>> {
    let events: Vec<VehicleEvent> = json_lines(path)?;
    for e in &events {
        if let Some(v) = e.violations().first() {
            return Err(Error::schema(path, format!("event {}: {v}", e.id)));
        }
    }
    Ok(events)
}

// Tracks

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackLine {
    id: u64,
    t: f64,
    px: f64,
    py: f64,
    class: VehicleClass,
}

/// One detection per line, grouped by track id in file order.
pub fn write_tracks(path: &Path, tracks: &[RawTrack]) -> Result<()> {
    let lines: Vec<TrackLine> = tracks
        .iter()
        .flat_map(|t| {
            t.frames.iter().map(move |f| TrackLine {
                id: t.id,
                t: f.t,
                px: f.pixel.px,
                py: f.pixel.py,
                class: f.class_vote,
            })
        })
        .collect();
    write_json_lines(path, &lines)
}

pub fn read_tracks(path: &Path) -> Result<Vec<RawTrack>> {
    let lines: Vec<TrackLine> = json_lines(path)?;
    let mut by_id: BTreeMap<u64, Vec<TrackFrame>> = BTreeMap::new();
    for l in lines {
        by_id.entry(l.id).or_default().push(TrackFrame {
            t: l.t,
            pixel: PixelPoint::new(l.px, l.py),
            class_vote: l.class,
        });
    }
    Ok(by_id
        .into_iter()
        .map(|(id, mut frames)| {
            frames.sort_by(|a, b| a.t.total_cmp(&b.t));
            RawTrack { id, frames }
        })
        .collect())
}

// Control points and homography

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ControlRow {
    px: f64,
    py: f64,
    Xw: f64,
    Yw: f64,
}

pub fn write_control_points(path: &Path, pairs: &[(PixelPoint, WorldPoint)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (p, q) in pairs {
        w.serialize(ControlRow {
            px: p.px,
            py: p.py,
            Xw: q.x,
            Yw: q.y,
        })?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)?;
    Ok(())
}

pub fn read_control_points(path: &Path) -> Result<Vec<(PixelPoint, WorldPoint)>> {
    let bytes = read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize::<ControlRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::schema(path, e.to_string()))?;
            Ok((PixelPoint::new(row.px, row.py), WorldPoint::new(row.Xw, row.Yw)))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HomographyFile {
    /// World → pixel, row-major.
    matrix: [[f64; 3]; 3],
    reprojection_rms_px: Option<f64>,
}

pub fn write_homography(path: &Path, h: &HomographyMatrix, rms: Option<f64>) -> Result<()> {
    write_json(
        path,
        &HomographyFile {
            matrix: h.a,
            reprojection_rms_px: rms,
        },
    )
}

pub fn read_homography(path: &Path) -> Result<HomographyMatrix> {
    let f: HomographyFile = read_json(path)?;
    let m = nalgebra::Matrix3::from_fn(|i, j| f.matrix[i][j]);
    HomographyMatrix::from_matrix(&m).map_err(|e| Error::schema(path, e.to_string()))
}

// Signals

pub const SHARD_MAGIC: &[u8; 4] = b"BFSG";
pub const SHARD_VERSION: u16 = 1;
pub const PREPROCESSED_FLAG: u16 = 0x8000;

/// Sensors sharing one rate, start time and length.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalShard {
    pub modality: SensorModality,
    pub preprocessed: bool,
    pub records: Vec<SignalRecord>,
}

impl SignalShard {
    pub fn new(modality: SensorModality, preprocessed: bool, records: Vec<SignalRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::MisalignedChannels("shard without sensors".into()))?;
        for r in &records {
            if r.modality != modality
                || r.sample_rate != first.sample_rate
                || r.t0 != first.t0
                || r.samples.len() != first.samples.len()
            {
                return Err(Error::MisalignedChannels(format!(
                    "sensor {} differs from sensor {} in modality, rate, start or length",
                    r.sensor_id, first.sensor_id
                )));
            }
        }
        Ok(Self {
            modality,
            preprocessed,
            records,
        })
    }

    pub fn rate(&self) -> f64 {
        self.records[0].sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.records[0].t0
    }

    pub fn n_samples(&self) -> usize {
        self.records[0].samples.len()
    }

    pub fn sensor_ids(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.sensor_id).collect()
    }
}

fn modality_code(m: SensorModality) -> u8 {
    match m {
        SensorModality::Acceleration => 0,
        SensorModality::Strain => 1,
    }
}

/// Binary layout, all little-endian: magic `BFSG`, version `u16` (high bit
/// set when preprocessed), `n_sensors u16`, `rate f64`, `t0 f64`,
/// `n_samples u64`, modality `u8`, `n_sensors` sensor ids `u32`, then the
/// samples row-major as `[n_samples][n_sensors]` f64.
pub fn encode_shard(shard: &SignalShard) -> Vec<u8> {
    let n = shard.records.len();
    let len = shard.n_samples();
    let mut b = Vec::with_capacity(37 + 4 * n + 8 * n * len);
    b.extend_from_slice(SHARD_MAGIC);
    let version = SHARD_VERSION | if shard.preprocessed { PREPROCESSED_FLAG } else { 0 };
    b.extend_from_slice(&version.to_le_bytes());
    b.extend_from_slice(&(n as u16).to_le_bytes());
    b.extend_from_slice(&shard.rate().to_le_bytes());
    b.extend_from_slice(&shard.t0().to_le_bytes());
    b.extend_from_slice(&(len as u64).to_le_bytes());
    b.push(modality_code(shard.modality));
    for r in &shard.records {
        b.extend_from_slice(&r.sensor_id.to_le_bytes());
    }
    for t in 0..len {
        for r in &shard.records {
            b.extend_from_slice(&r.samples[t].to_le_bytes());
        }
    }
    b
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::schema(self.path, format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_shard(bytes: &[u8], path: &Path) -> Result<SignalShard> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4)? != SHARD_MAGIC {
        return Err(Error::schema(path, "not a BFSG signal shard"));
    }
    let version = c.u16()?;
    if version & !PREPROCESSED_FLAG != SHARD_VERSION {
        return Err(Error::schema(path, format!("unsupported shard version {}", version & !PREPROCESSED_FLAG)));
    }
    let n = c.u16()? as usize;
    let rate = c.f64()?;
    let t0 = c.f64()?;
    let len = c.u64()? as usize;
    let modality = match c.take(1)?[0] {
        0 => SensorModality::Acceleration,
        1 => SensorModality::Strain,
        m => return Err(Error::schema(path, format!("unknown modality code {m}"))),
    };
    let ids = (0..n).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let expected = len
        .checked_mul(n)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::schema(path, "sample count overflows"))?;
    if bytes.len() - c.pos != expected {
        return Err(Error::schema(
            path,
            format!("expected {expected} sample bytes, found {}", bytes.len() - c.pos),
        ));
    }
    let mut samples = vec![Vec::with_capacity(len); n];
    for _ in 0..len {
        for s in samples.iter_mut() {
            s.push(c.f64()?);
        }
    }
    let records = ids
        .into_iter()
        .zip(samples)
        .map(|(sensor_id, samples)| SignalRecord {
            sensor_id,
            modality,
            sample_rate: rate,
            t0,
            samples,
        })
        .collect::<Vec<_>>();
    for r in &records {
        if let Some(v) = r.violations().first() {
            return Err(Error::schema(path, format!("sensor {}: {v}", r.sensor_id)));
        }
    }
    SignalShard::new(modality, version & PREPROCESSED_FLAG != 0, records)
}

pub fn write_shard(path: &Path, shard: &SignalShard) -> Result<()> {
    write_atomic(path, &encode_shard(shard))?;
    Ok(())
}

pub fn read_shard(path: &Path) -> Result<SignalShard> {
    decode_shard(&read(path)?, path)
}

/// CSV with a `time` column and one column per sensor id.
pub fn write_signals_csv(path: &Path, shard: &SignalShard) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string()];
    header.extend(shard.records.iter().map(|r| r.sensor_id.to_string()));
    w.write_record(&header)?;
    let (t0, rate) = (shard.t0(), shard.rate());
    for t in 0..shard.n_samples() {
        let mut row = vec![(t0 + t as f64 / rate).to_string()];
        row.extend(shard.records.iter().map(|r| r.samples[t].to_string()));
        w.write_record(&row)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)?;
    Ok(())
}

/// Reads a signal CSV; the rate is inferred from the first two timestamps.
pub fn read_signals_csv(path: &Path, modality: SensorModality) -> Result<SignalShard> {
    let bytes = read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    if header.get(0) != Some("time") || header.len() < 2 {
        return Err(Error::schema(path, "header must be `time` followed by sensor ids"));
    }
    let ids = header
        .iter()
        .skip(1)
        .map(|h| h.parse::<u32>().map_err(|_| Error::schema(path, format!("bad sensor id {h:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut times = Vec::new();
    let mut cols = vec![Vec::new(); ids.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::schema(path, format!("row {}: bad number {s:?}", i + 2)))
        };
        times.push(parse(&rec[0])?);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse(rec.get(c + 1).unwrap_or(""))?);
        }
    }
    if times.len() < 2 {
        return Err(Error::schema(path, "need at least two samples to infer the rate"));
    }
    let rate = 1.0 / (times[1] - times[0]);
    let records = ids
        .into_iter()
        .zip(cols)
        .map(|(sensor_id, samples)| SignalRecord {
            sensor_id,
            modality,
            sample_rate: rate,
            t0: times[0],
            samples,
        })
        .collect();
    SignalShard::new(modality, false, records)
}

/// Reads a shard by extension: `.csv` as CSV (with `modality`), anything
/// else as BFSG.
pub fn read_signals(path: &Path, modality: SensorModality) -> Result<SignalShard> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_signals_csv(path, modality)
    } else {
        read_shard(path)
    }
}

// Labels

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub window_start: f64,
    pub light_right: f64,
    pub light_left: f64,
    pub heavy_right: f64,
    pub heavy_left: f64,
}

impl LabelRow {
    pub fn new(window_start: f64, c: CategoryCounts) -> Self {
        Self {
            window_start,
            light_right: c[0],
            light_left: c[1],
            heavy_right: c[2],
            heavy_left: c[3],
        }
    }

    pub fn counts(&self) -> CategoryCounts {
        [self.light_right, self.light_left, self.heavy_right, self.heavy_left]
    }
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    read_csv(path)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)?;
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = read(path)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .map(|r| r.map_err(|e| Error::schema(path, e.to_string())))
        .collect()
}

// Hourly counts

/// `1970-01-01T00:00:00Z` style, dataset seconds read as Unix seconds.
pub fn iso_hour(t: f64) -> String {
    DateTime::from_timestamp(t.floor() as i64, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| format!("{t}"))
}

pub fn parse_iso(s: &str) -> Option<f64> {
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp() as f64)
}

pub fn write_hourly(path: &Path, series: &HourlySeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["hour_start_iso"];
    header.extend(TrafficCategory::ALL.iter().map(|c| c.column()));
    w.write_record(&header)?;
    for h in &series.hours {
        let mut row = vec![iso_hour(h.start)];
        row.extend(h.counts.iter().map(|v| format!("{v:.6}")));
        w.write_record(&row)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)?;
    Ok(())
}

pub fn read_hourly(path: &Path) -> Result<HourlySeries> {
    let bytes = read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("hour_start_iso")
        .chain(TrafficCategory::ALL.iter().map(|c| c.column()))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::schema(path, format!("header must be {}", expected.join(","))));
    }
    let mut hours = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::schema(path, format!("row {}", i + 2));
        let start = parse_iso(&rec[0]).ok_or_else(bad)?;
        let mut counts = [0.0; 4];
        for (k, c) in counts.iter_mut().enumerate() {
            *c = rec[k + 1].parse().map_err(|_| bad())?;
        }
        hours.push(HourBin { start, counts });
    }
    Ok(HourlySeries { hours })
}

/// Predicted and true hourly counts side by side, for plotting.
pub fn write_hourly_comparison(path: &Path, pred: &HourlySeries, truth: &HourlySeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["hour_start_iso".to_string()];
    for c in TrafficCategory::ALL {
        header.push(format!("pred_{}", c.column()));
        header.push(format!("true_{}", c.column()));
    }
    w.write_record(&header)?;
    for (p, t) in pred.hours.iter().zip(&truth.hours) {
        let mut row = vec![iso_hour(p.start)];
        for k in 0..4 {
            row.push(format!("{:.6}", p.counts[k]));
            row.push(format!("{:.6}", t.counts[k]));
        }
        w.write_record(&row)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)?;
    Ok(())
}

pub fn write_metrics(path: &Path, rows: &[CategoryMetrics]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<CategoryMetrics>> {
    read_csv(path)
}

// Manifests

/// Content hashes of the files a stage wrote, keyed by file name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: String,
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Manifest {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.to_owned(),
            files: BTreeMap::new(),
            meta,
        }
    }

    /// Hash `dir/name` and record it.
    pub fn add(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.files.insert(name.to_owned(), file_sha256(&dir.join(name))?);
        Ok(())
    }

    /// Re-hash every listed file and fail on the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, hash) in &self.files {
            let path = dir.join(name);
            if file_sha256(&path)? != *hash {
                return Err(Error::schema(path, "content hash differs from the manifest"));
            }
        }
        Ok(())
    }
}

pub const MANIFEST: &str = "manifest.json";

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        assert_eq!(iso_hour(0.0), "1970-01-01T00:00:00Z");
        assert_eq!(iso_hour(7200.0), "1970-01-01T02:00:00Z");
        assert_eq!(parse_iso("1970-01-01T02:00:00Z"), Some(7200.0));
    }

    #[test]
    fn shard_round_trip() {
        let rec = |id, s: Vec<f64>| SignalRecord {
            sensor_id: id,
            modality: SensorModality::Strain,
            sample_rate: 100.0,
            t0: 3600.0,
            samples: s,
        };
        let shard = SignalShard::new(
            SensorModality::Strain,
            true,
            vec![rec(1, vec![0.5, -1.0, 2.0]), rec(7, vec![1e-300, 3.0, -0.0])],
        )
        .unwrap();
        let bytes = encode_shard(&shard);
        assert_eq!(&bytes[..4], b"BFSG");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 0x8001);
        assert_eq!(decode_shard(&bytes, Path::new("x")).unwrap(), shard);
        let err = decode_shard(&bytes[..bytes.len() - 1], Path::new("x")).unwrap_err();
        assert_eq!(err.kind(), "SchemaMismatch");
    }
}
