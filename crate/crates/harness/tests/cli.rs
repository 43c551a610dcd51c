use std::path::Path;
use std::process::{Command, Output};

use drlek_harness::experiment::{share_windows, CSV_HEADER};
use drlek_harness::MetricsLog;

fn drlek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drlek")).args(args).output().expect("binary runs")
}

fn train(dir: &Path, variant: &str, seed: &str, episodes: &str) -> String {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, "eval_episodes = 3  # short\nmeta.learn_start = 40\n").unwrap();
    let out = drlek(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--variant",
        variant,
        "--seed",
        seed,
        "--episodes",
        episodes,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read_to_string(dir.join(format!("{variant}_seed{seed}.csv"))).unwrap()
}

#[test]
fn train_writes_a_reproducible_log() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = train(a.path(), "drl_ek", "5", "4");
    let y = train(b.path(), "drl_ek", "5", "4");
    assert_eq!(x, y);
    assert_eq!(x.lines().next().unwrap(), CSV_HEADER);
    let log = MetricsLog::from_csv(&x).unwrap();
    assert_eq!(log.len(), 7);
    assert!(log.records.iter().all(|r| r.shares.is_some() && r.wall_ms == 0));
    for s in share_windows(&log.records, 2) {
        assert!((s.share_a1 + s.share_a2 + s.share_other - 1.0).abs() < 1e-9);
    }
}

#[test]
fn a3c_log_covers_training_and_evaluation() {
    let d = tempfile::tempdir().unwrap();
    let log = MetricsLog::from_csv(&train(d.path(), "a3c", "1", "6")).unwrap();
    assert!(log.len() >= 9, "{}", log.len());
    assert!(log.records.iter().all(|r| r.shares.is_none()));
}

#[test]
fn plot_and_eval_read_logs() {
    let d = tempfile::tempdir().unwrap();
    train(d.path(), "planner", "0", "5");
    train(d.path(), "drl_ek", "0", "3");
    let planner = d.path().join("planner_seed0.csv");
    let ek = d.path().join("drl_ek_seed0.csv");

    let out = drlek(&["plot", planner.to_str().unwrap(), "--window", "2"]);
    assert!(out.status.success());
    assert!(d.path().join("planner_seed0_reward.svg").exists());
    assert!(!d.path().join("planner_seed0_shares.csv").exists());
    let out = drlek(&["plot", ek.to_str().unwrap(), "--window", "2"]);
    assert!(out.status.success());
    let svg = std::fs::read_to_string(d.path().join("drl_ek_seed0_shares.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let out = drlek(&["eval", planner.to_str().unwrap(), ek.to_str().unwrap(), "--tail", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("planner_seed0,"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    std::fs::write(&cfg, "episodes = 10\n\nnot_a_key = 3\n").unwrap();
    let out = drlek(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:3"), "{err}");

    let out = drlek(&["train", "--variant", "alphago"]);
    assert!(!out.status.success());

    let out = drlek(&["plot", d.path().join("missing.csv").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn detector_calibrate_prints_the_error_mix() {
    let out = drlek(&["detector", "calibrate", "--frames", "500"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let fp: f64 = row[0].parse().unwrap();
    let fn_: f64 = row[1].parse().unwrap();
    assert!((fp + fn_ - 1.0).abs() < 1e-9);
}
