//! Every example builds and runs to completion.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: [&str; 10] = [
    "homography",
    "simulate",
    "preprocess",
    "labels",
    "autodiff",
    "models",
    "training",
    "baseline",
    "metrics",
    "pipeline",
];

fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().join("examples")
}

#[test]
fn examples_run() {
    let dir = examples_dir();
    for name in EXAMPLES {
        let bin = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        assert!(bin.exists(), "{} is missing; build it with `cargo build --examples`", bin.display());
        let out = Command::new(&bin).output().unwrap();
        assert!(
            out.status.success(),
            "example {name} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty(), "example {name} printed nothing");
    }
}
