//! End-to-end checks of the mpk-sim binary: exit codes, report
//! determinism, and sweep output shape.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpk-sim"))
        .args(args)
        .current_dir(workspace_root())
        .output()
        .expect("binary runs")
}

fn workspace_root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap()
}

#[test]
fn replay_exits_zero_and_is_deterministic() {
    let a = run(&["--mode", "raw", "--trace", "traces/uaf_raw.trace"]);
    assert!(a.status.success());
    let b = run(&["--mode", "raw", "--trace", "traces/uaf_raw.trace"]);
    assert_eq!(a.stdout, b.stdout);
    let json: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(json["ops"].as_array().unwrap().last().unwrap()["outcome"], "allowed");
}

#[test]
fn managed_replay_denies_stale_access() {
    let out = run(&["--trace", "traces/uaf_managed.trace"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["ops"].as_array().unwrap().last().unwrap()["outcome"], "denied");
}

#[test]
fn parse_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    std::fs::write(&path, "T1 frobnicate\n").unwrap();
    let out = run(&["--trace", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 1"));
}

#[test]
fn sweeps_emit_csv() {
    let out = run(&["--sweep", "page_count"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "pages,managed_hit_cycles,raw_mprotect_cycles");
    assert_eq!(csv.lines().count(), 1001);

    let out = run(&["--sweep", "hit_rate", "--evict-rate", "1.0"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("hit_rate_pct,evict_rate,avg_cycles_per_op\n"));
}
