use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join(rel).display().to_string()
}

fn rallyvis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rallyvis")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn render_writes_manifest_and_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = rallyvis(&[
        "render",
        "--script",
        &fixture("fixtures/scripts/flash_forward.json"),
        "--tracking",
        &fixture("fixtures/rally.json.gz"),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["total_frames"], 300);
    let overlays = std::fs::read_dir(out_dir.join("overlays")).unwrap().count();
    assert_eq!(overlays, 300);
}

#[test]
fn corpus_stats_reports_order_shares() {
    let corpus = fixture("crates/core/data/corpus.json");
    let out = rallyvis(&["corpus", "stats", &corpus]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let linear = text.lines().find(|l| l.starts_with("Linear")).unwrap();
    assert!(linear.ends_with("52.5%"), "{linear}");

    let summary = json_of(&rallyvis(&["corpus", "stats", &corpus, "--json"]));
    let again: Value = serde_json::from_str(&serde_json::to_string(&summary).unwrap()).unwrap();
    assert_eq!(summary, again);
    assert_eq!(summary["total_clips"], 40);
}

#[test]
fn grouped_schedule_is_a_validation_error() {
    let out = rallyvis(&[
        "schedule",
        "compile",
        "--script",
        &fixture("fixtures/scripts/linear.json"),
        "--tracking",
        &fixture("fixtures/rally.json.gz"),
        "--order",
        "Grouped",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported order"));
}

#[test]
fn usage_errors_exit_1_with_usage() {
    for args in [&["--frobnicate"][..], &["render"], &["corpus"]] {
        let out = rallyvis(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    assert_eq!(rallyvis(&["--help"]).status.code(), Some(0));
}

#[test]
fn io_failure_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = rallyvis(&[
        "render",
        "--script",
        &fixture("fixtures/scripts/linear.json"),
        "--tracking",
        &fixture("fixtures/rally.json.gz"),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_files_and_flags_set_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("c.toml");
    std::fs::write(&toml_path, "[schedule]\ndefault_hold_frames = 50\n\n[render]\nstroke_width = 2.0\n").unwrap();
    let json_path = dir.path().join("c.json");
    std::fs::write(&json_path, r#"{"schedule": {"default_hold_frames": 50}}"#).unwrap();
    let compile = |extra: &[&str]| {
        let mut args = vec![
            "schedule",
            "compile",
            "--json",
            "--script",
        ];
        let script = fixture("fixtures/scripts/linear.json");
        let tracking = fixture("fixtures/rally.json.gz");
        args.push(&script);
        args.push("--tracking");
        args.push(&tracking);
        args.extend_from_slice(extra);
        json_of(&rallyvis(&args))["total_frames"].as_u64().unwrap()
    };
    // the shared anchor holds for the longest mapping hold
    assert_eq!(compile(&[]), 400);
    assert_eq!(compile(&["--config", toml_path.to_str().unwrap()]), 350);
    assert_eq!(compile(&["--config", json_path.to_str().unwrap()]), 350);
    assert_eq!(compile(&["--config", toml_path.to_str().unwrap(), "--hold-frames", "10"]), 310);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[schedule]\nhold = 3\n").unwrap();
    let out = rallyvis(&["--config", bad.to_str().unwrap(), "ingest", "validate", &fixture("fixtures/rally.json.gz")]);
    assert_eq!(out.status.code(), Some(1));
    let out = rallyvis(&["--palette", "red", "ingest", "validate", &fixture("fixtures/rally.json.gz")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_outputs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let tracking = fixture("fixtures/rally.json.gz");
    let v = json_of(&rallyvis(&["ingest", "validate", &tracking, "--json"]));
    assert_eq!(v["frame_count"], 300);

    let events = dir.path().join("events.json");
    let v = json_of(&rallyvis(&["events", "detect", "--tracking", &tracking, "--out", events.to_str().unwrap(), "--json"]));
    assert_eq!(v["counts"]["Turn"], 6);
    let log: Value = serde_json::from_slice(&std::fs::read(&events).unwrap()).unwrap();
    assert_eq!(log["events"].as_array().unwrap().iter().filter(|e| e["kind"] == "Turn").count(), 6);

    let v = json_of(&rallyvis(&[
        "recommend",
        "--data",
        "ball_rotation_speed",
        "potential_placements",
        "potential_routes",
        "--order",
        "Linear",
        "--json",
    ]));
    let visuals: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["visual"].as_str().unwrap()).collect();
    assert_eq!(visuals, ["Label", "HeatmapRegion", "Polyline"]);

    let pyramid = dir.path().join("pyramid.json");
    let v = json_of(&rallyvis(&["pyramid", "build", "--tracking", &tracking, "--out", pyramid.to_str().unwrap(), "--json"]));
    assert_eq!(v["turn_count"], 6);
    let q = json_of(&rallyvis(&["pyramid", "query", "--pyramid", pyramid.to_str().unwrap(), "--brush", "245,299", "--json"]));
    assert!(q["nodes"].as_array().unwrap().iter().all(|n| n["end"].as_u64().unwrap() >= 245));
}

#[test]
fn tactics_run_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let tracking = fixture("fixtures/rally.json.gz");
    let facts = dir.path().join("facts.json");
    let v = json_of(&rallyvis(&["tactics", "run", "--tracking", &tracking, "--out", facts.to_str().unwrap(), "--json"]));
    assert!(v["facts"].as_u64().unwrap() > 0);

    let import = dir.path().join("import.json");
    std::fs::write(
        &import,
        r#"{"schema_version": 1, "facts": [
            {"kind": "KeyStroke", "anchor_event": "stroke#3", "payload": {"type": "label", "value": "key"}},
            {"kind": "KeyStroke", "anchor_event": "stroke#42", "payload": {"type": "label", "value": "lost"}}
        ]}"#,
    )
    .unwrap();
    let v = json_of(&rallyvis(&["tactics", "import", "--tracking", &tracking, "--file", import.to_str().unwrap(), "--out", dir.path().join("imported.json").to_str().unwrap(), "--json"]));
    assert_eq!(v["report"]["imported"], 1);
    assert_eq!(v["report"]["skipped"][0]["anchor_event"], "stroke#42");
}

#[test]
fn missing_flag_value_exits_1() {
    let out = rallyvis(&["schedule", "compile", "--script"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--script"));
}
