use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use tvdesign::harness::mask_seconds;
use tvdesign::io::{parse_pgm, parse_raw};

const SMALL: &str = r#"{
  "phantom": { "kind": "shapes2d" },
  "N": 12,
  "N_design": 6,
  "prior": { "t": 1e-4, "gamma": 1e-2 },
  "tau": 1e-3,
  "rounds": 3,
  "sigma": 1e-2,
  "space": { "kind": "parallel", "width": 0.5, "angles": 8, "offsets": 3, "detectors_full": 11 },
  "mode": "MODE",
  "seed": 4
}"#;

fn config(dir: &Path, mode: &str, extra: &str) -> PathBuf {
    let mut text = SMALL.replace("MODE", mode);
    if !extra.is_empty() {
        text = text.replacen('{', &format!("{{ {extra},"), 1);
    }
    let path = dir.join(format!("{mode}.json"));
    fs::write(&path, text).unwrap();
    path
}

fn tvdesign(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tvdesign")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run_in(dir: &Path, sub: &str, cfg: &Path, out: &str, extra: &[&str]) -> (i32, String) {
    let out = dir.join(out);
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tvdesign(&args)
}

#[test]
fn sequential_run_writes_its_outputs_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "optimized", "");
    for out in ["a", "b"] {
        let (code, err) = run_in(tmp.path(), "run-sequential", &cfg, out, &["--dump-images", "--verbose"]);
        assert_eq!(code, 0, "{err}");
    }
    let a = tmp.path().join("a");
    for f in ["config.json", "errors.csv", "designs.csv", "scores.csv", "final.raw", "final.pgm", "truth.raw", "round_001.raw"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let errors = fs::read_to_string(a.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 4);
    let other = fs::read_to_string(tmp.path().join("b/errors.csv")).unwrap();
    assert_eq!(mask_seconds(&errors), mask_seconds(&other));
    assert_eq!(fs::read(a.join("designs.csv")).unwrap(), fs::read(tmp.path().join("b/designs.csv")).unwrap());

    let img = parse_raw(&fs::read(a.join("final.raw")).unwrap()).unwrap();
    assert_eq!(img.grid().cells_per_edge(), 12);
    let pgm = parse_pgm(&fs::read(a.join("final.pgm")).unwrap()).unwrap();
    assert_eq!((pgm.width, pgm.height), (12, 12));
}

#[test]
fn seed_flag_changes_the_noise() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "reference_equiangular", "");
    assert_eq!(run_in(tmp.path(), "run-reference", &cfg, "a", &[]).0, 0);
    assert_eq!(run_in(tmp.path(), "run-reference", &cfg, "b", &["--seed", "9"]).0, 0);
    let a = fs::read_to_string(tmp.path().join("a/errors.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("b/errors.csv")).unwrap();
    assert_ne!(mask_seconds(&a), mask_seconds(&b));
}

#[test]
fn simulate_then_reconstruct() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "reference_equiangular", "");
    assert_eq!(run_in(tmp.path(), "phantom", &cfg, "p", &[]).0, 0);
    assert!(tmp.path().join("p/phantom.pgm.txt").exists());
    assert_eq!(run_in(tmp.path(), "simulate", &cfg, "s", &[]).0, 0);
    let ms = tmp.path().join("s/measurements.json");
    let (code, err) = run_in(tmp.path(), "reconstruct", &cfg, "r", &["--measurements", ms.to_str().unwrap(), "--verbose"]);
    assert_eq!(code, 0, "{err}");
    assert!(tmp.path().join("r/iterations.csv").exists());
    let img = parse_raw(&fs::read(tmp.path().join("r/reconstruction.raw")).unwrap()).unwrap();
    assert!(img.values().iter().all(|v| v.is_finite()));
}

#[test]
fn design_step_prints_a_candidate() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "optimized", "");
    let out = Command::new(env!("CARGO_BIN_EXE_tvdesign"))
        .args(["design-step", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("d").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("angle"), "{stdout}");
    let scores = fs::read_to_string(tmp.path().join("d/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 8 * 3);
}

#[test]
fn bad_input_exits_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "optimized", r#""colour": 3"#);
    assert_eq!(run_in(tmp.path(), "run-sequential", &cfg, "o", &[]).0, 2);
    // a reference mode handed to the sequential driver
    let cfg = config(tmp.path(), "reference_equiangular", "");
    assert_eq!(run_in(tmp.path(), "run-sequential", &cfg, "o", &[]).0, 2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "[]").unwrap();
    assert_eq!(run_in(tmp.path(), "reconstruct", &cfg, "o", &["--measurements", bad.to_str().unwrap()]).0, 2);
}

#[test]
fn exhausted_iterations_exit_with_code_three_and_keep_partial_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "optimized", r#""max_iterations": 1"#);
    let text = fs::read_to_string(&cfg).unwrap().replace("1e-3,", "1e-14,");
    fs::write(&cfg, text).unwrap();
    let (code, err) = run_in(tmp.path(), "run-sequential", &cfg, "o", &[]);
    assert_eq!(code, 3, "{err}");
    assert!(tmp.path().join("o/errors.csv").exists());
}

#[test]
fn ensemble_summarises_members() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "reference_equiangular", "");
    assert_eq!(run_in(tmp.path(), "ensemble", &cfg, "e", &["--count", "3"]).0, 0);
    let csv = fs::read_to_string(tmp.path().join("e/ensemble.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
    let members = fs::read_to_string(tmp.path().join("e/members.csv")).unwrap();
    assert!(members.lines().count() > 3);
}
