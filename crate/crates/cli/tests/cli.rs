use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn msm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msm")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("msm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str, n: &str, seed: &str) -> (PathBuf, PathBuf) {
    let (data, map) = (dir.join(format!("{scenario}-{seed}.csv")), dir.join("churn.msm"));
    let out = msm(&[
        "simulate",
        "--scenario",
        scenario,
        "--n",
        n,
        "--seed",
        seed,
        "--out-data",
        s(&data),
        "--out-map",
        s(&map),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (data, map)
}

#[test]
fn validate_reports_ok_and_positioned_errors() {
    let dir = scratch("validate");
    let good = dir.join("good.msm");
    std::fs::write(&good, msm_core::CHURN_MAP).unwrap();
    let out = msm(&["validate", s(&good)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(": ok"));

    let bad = dir.join("bad.msm");
    std::fs::write(&bad, "map m\nview system\n  data a\n  edge a => a\n").unwrap();
    let out = msm(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.msm:4:"), "{err}");

    let out = msm(&["validate", s(&dir.join("missing.msm"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(msm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(msm(&["trace"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = scratch("simulate");
    let (a, _) = simulate(&dir, "S3", "200", "5");
    let first = std::fs::read(&a).unwrap();
    std::fs::remove_file(&a).unwrap();
    let (b, map) = simulate(&dir, "S3", "200", "5");
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 401);
    assert_eq!(std::fs::read_to_string(map).unwrap(), msm_core::CHURN_MAP);
    assert_eq!(msm(&["simulate", "--scenario", "S9", "--out-data", s(&dir.join("x.csv"))]).status.code(), Some(1));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn detect_lists_alerts() {
    let dir = scratch("detect");
    let (data, map) = simulate(&dir, "S0", "300", "1");
    let out = msm(&["detect", s(&map), s(&data), "--alpha", "1.0", "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["schema"], "msm-report/1");
    assert_eq!(doc["alerts"].as_array().unwrap().len(), 6);
    assert!(doc["trace"].is_null());

    let out = msm(&["detect", s(&map), s(&data)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no alerts at alpha=0.01"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn trace_text_and_json() {
    let dir = scratch("trace");
    let (data, map) = simulate(&dir, "S2", "3000", "2");
    let out = msm(&["trace", s(&map), s(&data), "--alert", "system.promo_ranking"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("trace system.promo_ranking"), "{text}");
    assert!(text.contains("verdict=root-cause(pipeline.parse_quality)"), "{text}");

    let report = dir.join("report.json");
    let out =
        msm(&["trace", s(&map), s(&data), "--alert", "system.promo_ranking", "--format", "json", "--out", s(&report)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["verdicts"][0]["verdict"]["kind"], "root_cause");
    assert_eq!(doc["trace"]["steps"][0]["pattern"], "AP1.2");

    let out = msm(&["trace", s(&map), s(&data), "--alert", "system.nope"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(dir).unwrap();
}
