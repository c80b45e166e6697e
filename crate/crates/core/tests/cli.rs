//! Exit codes and outputs of the command-line driver.

use std::process::Command;

fn signcem() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_signcem"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn successful_sweep_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let status = signcem()
        .args(["--model", "square", "--fine-n", "40", "--coarse-n", "5,10", "--layers", "1,2", "--no-cache", "--baseline"])
        .arg("--out")
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let errors = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 4);
    assert!(dir.path().join("baseline.csv").is_file());
    assert!(!dir.path().join("cache").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "cross", "fine_n": 50, "coarse_n": 5, "layers": 1, "n_cells": 2, "sigma_minus": 1000}"#).unwrap();
    let out = dir.path().join("out");
    let status = signcem().arg("--config").arg(&cfg).args(["--layers", "2"]).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let echoed = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(echoed.contains("\"layers\": [\n    2\n  ]"), "{echoed}");
    assert!(out.join("cache").is_dir());
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--fine-n", "0"],
        vec!["--fine-n", "40", "--coarse-n", "7"],
        vec!["--model", "hexagon"],
        vec!["--unknown-flag"],
    ] {
        let status = signcem().args(&args).arg("--out").arg(dir.path()).status().unwrap();
        assert_eq!(status.code(), Some(1), "{args:?}");
    }
    let missing = signcem().args(["--config", "/nonexistent/run.json"]).status().unwrap();
    assert_eq!(missing.code(), Some(1));
}

#[test]
fn all_points_failing_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singular.json");
    std::fs::write(&cfg, r#"{"model": "square", "fine_n": 8, "coarse_n": 8, "layers": 8, "n_cells": 2, "cache": false}"#).unwrap();
    let status = signcem()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let errors = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(errors.contains("error:coarse_singular"));
}

#[test]
fn help_exits_zero() {
    let out = signcem().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--sigma-minus"));
}
