//! The command-line pipeline, end to end, on a short simulation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 3

[model]
variant = "fe_mlp"

[model.mlp]
hidden = [16]
dropout = 0.0

[model.head]
hidden = 8

[train]
max_epochs = 2
warmup_epochs = 1
cycle_epochs = 4
batch = 64
augment = false
"#;

fn bridgeflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridgeflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bridgeflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_line(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap_or_default().to_owned();
    assert!(line.starts_with("error kind="), "{err}");
    line
}

struct Run {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Run {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("run.toml");
        fs::write(&config, CONFIG).unwrap();
        Self { _tmp: tmp, root, config }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, args: &[&str]) -> String {
        let mut all = vec!["--config", s(&self.config), "--deterministic"];
        all.extend_from_slice(args);
        ok(&all)
    }
}

#[test]
fn full_pipeline_is_reproducible_and_camera_free_at_inference() {
    let r = Run::new();
    let (sim, cam, lab) = (r.p("sim"), r.p("cam"), r.p("labels"));
    r.run(&["simulate", "--hours", "2", "--out", s(&sim)]);
    for f in ["strain.bfsg", "events.jsonl", "tracks.jsonl", "control_points.csv", "manifest.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    r.run(&["calibrate-camera", "--points", s(&sim.join("control_points.csv")), "--out", s(&cam)]);
    r.run(&[
        "label",
        "--tracks",
        s(&sim.join("tracks.jsonl")),
        "--homography",
        s(&cam.join("homography.json")),
        "--end",
        "3600",
        "--out",
        s(&lab),
    ]);
    assert!(lab.join("labels.csv").exists());

    let (train_ds, test_ds) = (r.p("train_ds"), r.p("test_ds"));
    r.run(&[
        "preprocess",
        "--signals",
        s(&sim),
        "--labels",
        s(&lab.join("labels.csv")),
        "--end",
        "3600",
        "--out",
        s(&train_ds),
    ]);
    r.run(&[
        "preprocess", "--signals", s(&sim), "--mode", "test", "--start", "3600", "--out", s(&test_ds),
    ]);

    let (ck, ck2) = (r.p("ck"), r.p("ck2"));
    r.run(&["train", "--dataset", s(&train_ds), "--out", s(&ck)]);
    r.run(&["train", "--dataset", s(&train_ds), "--out", s(&ck2)]);
    assert_eq!(fs::read(ck.join("model.bin")).unwrap(), fs::read(ck2.join("model.bin")).unwrap());

    let ev = r.p("eval");
    r.run(&[
        "evaluate",
        "--checkpoint",
        s(&ck),
        "--dataset",
        s(&test_ds),
        "--truth",
        s(&sim.join("events.jsonl")),
        "--out",
        s(&ev),
    ]);
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("category,"), "{metrics}");
    assert_eq!(metrics.lines().count(), 5);

    let inf = r.p("inf");
    r.run(&["infer", "--checkpoint", s(&ck), "--signals", s(&sim), "--start", "3600", "--out", s(&inf)]);
    let hourly = fs::read(inf.join("hourly.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&hourly).lines().count(), 2);

    // inference needs neither the camera nor the event log
    for f in ["tracks.jsonl", "events.jsonl", "control_points.csv"] {
        fs::remove_file(sim.join(f)).unwrap();
    }
    fs::remove_dir_all(&cam).unwrap();
    fs::remove_dir_all(&lab).unwrap();
    let inf2 = r.p("inf2");
    r.run(&["infer", "--checkpoint", s(&ck), "--signals", s(&sim), "--start", "3600", "--out", s(&inf2)]);
    assert_eq!(fs::read(inf2.join("hourly.csv")).unwrap(), hourly);

    // a dataset preprocessed differently is refused
    let other = r.p("other.toml");
    fs::write(&other, format!("{CONFIG}\n[preprocess]\ncutoff = 4.0\n")).unwrap();
    let odd = r.p("odd_ds");
    ok(&[
        "--config", s(&other), "preprocess", "--signals", s(&sim), "--mode", "test", "--start", "3600", "--out", s(&odd),
    ]);
    fs::write(r.p("truth.csv"), fs::read(inf.join("hourly.csv")).unwrap()).unwrap();
    let out = bridgeflow(&[
        "evaluate",
        "--checkpoint",
        s(&ck),
        "--dataset",
        s(&odd),
        "--truth",
        s(&r.p("truth.csv")),
        "--out",
        s(&r.p("eval2")),
    ]);
    assert!(error_line(&out).starts_with("error kind=SchemaMismatch"));
}

#[test]
fn baseline_runs_with_and_without_calibration() {
    let r = Run::new();
    let sim = r.p("sim");
    r.run(&["simulate", "--hours", "1", "--out", s(&sim)]);
    let out = r.p("base");
    r.run(&["baseline", "--signals", s(&sim), "--out", s(&out)]);
    assert!(out.join("hourly.csv").exists());
    let cal = r.p("cal");
    r.run(&[
        "baseline",
        "--signals",
        s(&sim),
        "--events",
        s(&sim.join("events.jsonl")),
        "--calibrate",
        "--out",
        s(&cal),
    ]);
    assert!(cal.join("config.toml").exists());
    assert!(cal.join("metrics.csv").exists());
}

#[test]
fn failures_print_one_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bridgeflow(&["train", "--dataset", s(&tmp.path().join("nope")), "--out", s(tmp.path())]);
    assert!(error_line(&out).starts_with("error kind=FileMissing message=\""));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nbatchsize = 3\n").unwrap();
    let out = bridgeflow(&["--config", s(&bad), "simulate", "--hours", "0.1", "--out", s(tmp.path())]);
    let line = error_line(&out);
    assert!(line.starts_with("error kind=ConfigInvalid"), "{line}");
    assert!(line.contains("train.batchsize"), "{line}");
}
