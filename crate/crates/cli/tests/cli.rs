use std::path::Path;
use std::process::{Command, Output};

fn histmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = histmap(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn simulate_writes_header_plus_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--frames", "50", "--seed", "2", "--out", "s.jsonl"],
    );
    let recs = lines(&dir.path().join("s.jsonl"));
    assert_eq!(recs.len(), 51);
    assert_eq!(recs[0]["type"], "header");
    assert_eq!(recs[0]["seed"], 2);
    assert!(recs[1..].iter().all(|r| r["type"] == "frame"));
}

#[test]
fn full_dropout_gives_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--frames", "10", "--dropout", "1.0", "--out", "s.jsonl"],
    );
    let recs = lines(&dir.path().join("s.jsonl"));
    for r in &recs[1..] {
        assert_eq!(r["pred"].as_array().unwrap().len(), 0);
        assert!(!r["gt"].as_array().unwrap().is_empty());
    }
}

#[test]
fn lifecycle_log_echoes_default_gates() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--frames", "5", "--out", "s.jsonl"]);
    ok(dir.path(), &["track", "--scene", "s.jsonl", "--out", "t.json"]);
    let log = lines(&dir.path().join("t.lifecycle.jsonl"));
    assert_eq!(log.len(), 6);
    assert_eq!(log[0]["type"], "config");
    assert_eq!(log[0]["tau_det"], 0.4);
    assert_eq!(log[0]["tau_track"], 0.5);
    assert_eq!(log[0]["lambda"], 0.95);
    assert_eq!(log[0]["tau_map"], 0.5);
}

#[test]
fn impossible_continuation_gate_removes_every_track_after_birth() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--frames", "6", "--out", "s.jsonl"]);
    ok(
        dir.path(),
        &[
            "track",
            "--scene",
            "s.jsonl",
            "--tau-track",
            "1.01",
            "--log",
            "l.jsonl",
            "--out",
            "t.json",
        ],
    );
    let log = lines(&dir.path().join("l.jsonl"));
    assert_eq!(log[0]["tau_track"], 1.01);
    for step in &log[1..] {
        assert!(step["continued"].as_array().unwrap().is_empty());
        assert_eq!(step["live_count"], step["born"].as_array().unwrap().len());
    }
    let tracks: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    for t in tracks["tracks"].as_array().unwrap() {
        assert_eq!(t["observations"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn eval_prints_a_table_and_dumps_one_trace_per_category_threshold() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--frames", "12", "--trajectory", "turn", "--out", "s.jsonl"],
    );
    ok(dir.path(), &["track", "--scene", "s.jsonl", "--out", "t.json"]);
    let table = ok(
        dir.path(),
        &["eval", "--scene", "s.jsonl", "--tracks", "t.json", "--mode", "frame"],
    );
    assert!(table.lines().last().unwrap().starts_with("mAP 100.0"), "{table}");
    let table = ok(
        dir.path(),
        &[
            "eval",
            "--scene",
            "s.jsonl",
            "--tracks",
            "t.json",
            "--mode",
            "global",
            "--dump-matches",
            "--out",
            "g.json",
        ],
    );
    assert!(table.contains("G-mAP 100.0"), "{table}");
    // 3 IoU thresholds for pedestrians, 4 distance thresholds for each polyline class
    let traces = lines(&dir.path().join("g.matches.jsonl"));
    assert_eq!(traces.len(), 3 + 4 + 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "global");
}

#[test]
fn dump_matches_is_rejected_in_frame_mode() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--frames", "3", "--out", "s.jsonl"]);
    let out = histmap(
        dir.path(),
        &[
            "eval",
            "--scene",
            "s.jsonl",
            "--mode",
            "frame",
            "--dump-matches",
            "--out",
            "f.json",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn malformed_scene_fails_with_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--frames", "3", "--out", "s.jsonl"]);
    let mut text = std::fs::read_to_string(dir.path().join("s.jsonl")).unwrap();
    text.push_str("{\"type\":\"frame\",\"frame_index\":1}\n");
    std::fs::write(dir.path().join("bad.jsonl"), text).unwrap();
    let out = histmap(dir.path(), &["track", "--scene", "bad.jsonl", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.jsonl:5"), "{err}");
}

#[test]
fn render_writes_rasters_svg_and_histories() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--frames", "8", "--out", "s.jsonl"]);
    ok(dir.path(), &["track", "--scene", "s.jsonl", "--out", "t.json"]);
    ok(
        dir.path(),
        &["render", "--scene", "s.jsonl", "--tracks", "t.json", "--out", "viz"],
    );
    let viz = dir.path().join("viz");
    let svg = std::fs::read_to_string(viz.join("map.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(viz.join("gt_divider.pgm").exists());
    assert!(std::fs::read_dir(viz.join("history")).unwrap().count() > 0);
}

#[test]
fn bad_thread_cap_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_histmap"))
        .args(["simulate", "--frames", "2", "--out", "s.jsonl"])
        .current_dir(dir.path())
        .env("HISTMAP_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("HISTMAP_THREADS"));
}
