use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restoration"))
        .current_dir(root)
        .args(args)
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> Output {
    let out = run(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// synth, ingest and analyze into `work/`.
fn analyzed(root: &Path, extra: &[&str]) {
    ok(root, &["synth", "--out", "syn", "--seed", "5", "--n-failures", "500"]);
    ok(root, &["ingest", "syn/outages.csv", "--out", "work"]);
    let mut args = vec!["analyze", "work/events.json", "--out", "work"];
    args.extend_from_slice(extra);
    ok(root, &args);
}

#[test]
fn ingest_accepts_synthetic_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "syn", "--seed", "1", "--n-failures", "150"]);
    ok(dir.path(), &["ingest", "syn/outages.csv", "--out", "work"]);
    let v = json(dir.path().join("work/validation.json"));
    assert_eq!(v["accepted"], 150);
    assert_eq!(v["rejected"], 0);
    let events = json(dir.path().join("work/events.json"));
    assert_eq!(events.as_array().unwrap().len(), 1);
    assert!(dir.path().join("work/ingest.manifest.json").exists());
}

#[test]
fn missing_input_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ingest", "nowhere/outages.csv", "--out", "work"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere/outages.csv"), "{}", stderr(&out));
    assert!(!dir.path().join("work").exists());
}

#[test]
fn one_bad_row_is_rejected_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "syn", "--seed", "2", "--n-failures", "120"]);
    let csv = dir.path().join("syn/outages.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("bad-1,50,10,7,Recloser,,,true\n");
    fs::write(&csv, text).unwrap();
    let out = ok(dir.path(), &["ingest", "syn/outages.csv", "--out", "work"]);
    let v = json(dir.path().join("work/validation.json"));
    assert_eq!(v["accepted"], 120);
    assert_eq!(v["rejected"], 1);
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn empty_events_file_warns_and_succeeds() {
    for contents in ["", "[]"] {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("events.json"), contents).unwrap();
        let out = ok(dir.path(), &["analyze", "events.json", "--out", "work"]);
        assert!(stderr(&out).contains("no analyzable events"), "{}", stderr(&out));
        assert!(dir.path().join("work/clusters.json").exists());
    }
}

#[test]
fn y_bins_flag_sets_grid_resolution() {
    let dir = tempfile::tempdir().unwrap();
    analyzed(dir.path(), &["--y-bins", "10"]);
    let grid = json(dir.path().join("work/grid_severe.json"));
    assert_eq!(grid["y_bin_edges"].as_array().unwrap().len(), 11);
    assert_eq!(grid["f_values"][0].as_array().unwrap().len(), 10);
}

#[test]
fn invalid_options_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("events.json"), "[]").unwrap();
    let out = run(dir.path(), &["analyze", "events.json", "--out", "work", "--folds", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("INVALID_CONFIG"));
    let out = run(dir.path(), &["analyze", "events.json", "--out", "work", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_without_tipping_marks_it_absent() {
    let dir = tempfile::tempdir().unwrap();
    analyzed(dir.path(), &[]);
    ok(dir.path(), &["report", "--input", "work", "--out", "report"]);
    assert_eq!(json(dir.path().join("report/tipping.json"))["status"], "absent");
    let summary = fs::read_to_string(dir.path().join("report/summary.txt")).unwrap();
    assert!(summary.contains("absent"));

    ok(dir.path(), &["tipping", "work/events.json", "--out", "work"]);
    ok(dir.path(), &["report", "--input", "work", "--out", "report2"]);
    let tipping = json(dir.path().join("report2/tipping.json"));
    assert!(tipping["classes"]["Severe"]["mean"].is_number());
}

#[test]
fn report_names_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    analyzed(dir.path(), &[]);
    fs::remove_file(dir.path().join("work/clusters.json")).unwrap();
    let out = run(dir.path(), &["report", "--input", "work", "--out", "report"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("clusters.json"), "{}", stderr(&out));
    assert!(stderr(&out).contains("MISSING_ARTIFACT"));
}

#[test]
fn category_shares_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    analyzed(dir.path(), &[]);
    ok(dir.path(), &["report", "--input", "work", "--out", "report"]);
    let rules = json(dir.path().join("report/rules.json"));
    for (_, class) in rules["classes"].as_object().unwrap() {
        for key in ["customer_share", "downtime_share", "failure_share"] {
            let total: f64 = class["shares"].as_object().unwrap().values().map(|s| s[key].as_f64().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9, "{key} sums to {total}");
        }
    }
    let summary = fs::read_to_string(dir.path().join("report/summary.txt")).unwrap();
    assert!(summary.contains("total                    100.0%     100.0%     100.0%"), "{summary}");
}

#[test]
fn strict_priority_dataset_shows_upper_left_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(
        root,
        &[
            "synth", "--out", "syn", "--seed", "4", "--n-failures", "1000", "--crews", "1", "--arrival-rate", "60000",
        ],
    );
    ok(root, &["ingest", "syn/outages.csv", "--out", "work"]);
    ok(root, &["analyze", "work/events.json", "--out", "work"]);
    let clusters = json(root.join("work/clusters.json"));
    let hints: Vec<&str> = clusters["events"][0]["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["hint"].as_str().unwrap())
        .collect();
    assert!(hints.contains(&"upper-left"), "{hints:?}");
    assert_eq!(clusters["classes"]["Severe"]["clusters"], clusters["events"][0]["clusters"]);
}

#[test]
fn fifo_dataset_has_no_accepted_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["synth", "--out", "syn", "--seed", "8", "--n-failures", "1000", "--policy", "fifo"]);
    ok(root, &["ingest", "syn/outages.csv", "--out", "work"]);
    ok(root, &["analyze", "work/events.json", "--out", "work"]);
    let clusters = json(root.join("work/clusters.json"));
    assert_eq!(clusters["events"][0]["clusters"].as_array().unwrap().len(), 0);
    assert_eq!(clusters["classes"]["Severe"]["clusters"].as_array().unwrap().len(), 0);
}

#[test]
fn every_command_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    analyzed(dir.path(), &[]);
    for cmd in ["scaling", "tipping", "evolve", "impact"] {
        ok(dir.path(), &[cmd, "work/events.json", "--out", cmd]);
        let m = json(dir.path().join(cmd).join(format!("{cmd}.manifest.json")));
        assert_eq!(m["command"], cmd);
        assert!(!m["outputs"].as_array().unwrap().is_empty());
    }
}
