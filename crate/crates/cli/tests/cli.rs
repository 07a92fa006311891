//! End-to-end CLI tests driving the real binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pyramem"))
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process terminated by signal")
}

/// Write the two-clip fixture frame dump: 100 frames of 4x4x3 at 10 ms,
/// hard cuts at frames 25 and 75, plus an aligned subtitle track.
fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let frames_path = dir.join("frames.mmfr");
    let subs_path = dir.join("subs.tsv");

    let mut bytes: Vec<u8> = Vec::new();
    bytes.extend_from_slice(b"MMFR");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&4u32.to_le_bytes()); // height
    bytes.extend_from_slice(&4u32.to_le_bytes()); // width
    bytes.extend_from_slice(&3u32.to_le_bytes()); // channels
    bytes.extend_from_slice(&100u64.to_le_bytes());
    for i in 0..100u64 {
        let level: u8 = match i {
            0..=24 => 20,
            25..=49 => 160,
            50..=74 => 60,
            _ => 200,
        };
        bytes.extend_from_slice(&((i + 1) * 10).to_le_bytes());
        bytes.extend_from_slice(&[level; 48]);
    }
    std::fs::write(&frames_path, bytes).unwrap();
    std::fs::write(&subs_path, "220\t300\tALICE waves\n720\t800\tBOB jumps\n").unwrap();
    (frames_path, subs_path)
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("engine.cfg");
    std::fs::write(&path, "segment_frames=50\n").unwrap();
    path
}

fn build_fixture_snapshot(dir: &Path) -> PathBuf {
    let (frames, subs) = write_fixture(dir);
    let config = write_config(dir);
    let mem = dir.join("mem");
    let output = bin()
        .args(["build", "--frames"])
        .arg(&frames)
        .arg("--subtitles")
        .arg(&subs)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&mem)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "build failed: {}", stderr_of(&output));
    assert_eq!(stdout_of(&output).trim(), "sensory=2 episodic=2 concepts=2");
    mem
}

#[test]
fn build_reports_layer_counts() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture_snapshot(dir.path());
}

#[test]
fn build_missing_file_exits_2_with_filename() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["build", "--frames"])
        .arg(dir.path().join("nope.mmfr"))
        .arg("--out")
        .arg(dir.path().join("mem"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("nope.mmfr"));
}

#[test]
fn build_twice_yields_identical_digests() {
    let dir = tempfile::tempdir().unwrap();
    let mem_a = build_fixture_snapshot(dir.path());
    let dir_b = tempfile::tempdir().unwrap();
    let mem_b = build_fixture_snapshot(dir_b.path());
    let manifest_a = std::fs::read_to_string(mem_a.join("manifest")).unwrap();
    let manifest_b = std::fs::read_to_string(mem_b.join("manifest")).unwrap();
    let digests = |text: &str| -> Vec<String> {
        text.lines()
            .filter(|l| l.starts_with("digest."))
            .map(|l| l.to_string())
            .collect()
    };
    assert_eq!(digests(&manifest_a), digests(&manifest_b));
}

#[test]
fn query_concentrating_stops_at_symbolic() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let trace_path = dir.path().join("trace.jsonl");
    let output = bin()
        .args(["query", "--mem"])
        .arg(&mem)
        .args([
            "--question",
            "who waves",
            "--choice",
            "alice",
            "--choice",
            "carol",
            "--choice",
            "dave",
            "--choice",
            "erin",
            "--trace",
        ])
        .arg(&trace_path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    assert_eq!(stdout_of(&output).trim(), "answer=0 letter=A");
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    // Init record, one symbolic step, one result record.
    let steps: Vec<&str> = trace.lines().collect();
    assert_eq!(steps.len(), 3);
    assert!(steps[1].contains("\"layer\":\"symbolic\""));
    assert!(steps[1].contains("\"decision\":\"stop\""));
}

#[test]
fn query_no_overlap_runs_three_steps_and_tie_breaks_to_a() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let trace_path = dir.path().join("trace.jsonl");
    let output = bin()
        .args(["query", "--mem"])
        .arg(&mem)
        .args([
            "--question",
            "who waves",
            "--choice",
            "w",
            "--choice",
            "x",
            "--choice",
            "y",
            "--choice",
            "z",
            "--trace",
        ])
        .arg(&trace_path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    assert_eq!(stdout_of(&output).trim(), "answer=0 letter=A");
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    // Init + three layers + result.
    assert_eq!(trace.lines().count(), 5);
    assert!(trace.contains("\"layer\":\"sensory\""));
}

#[test]
fn query_single_choice_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let output = bin()
        .args(["query", "--mem"])
        .arg(&mem)
        .args(["--question", "q", "--choice", "only"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("at least two"));
}

#[test]
fn query_bad_snapshot_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["query", "--mem"])
        .arg(dir.path().join("missing"))
        .args(["--question", "q", "--choice", "a", "--choice", "b"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn query_gamma_max_entropy_stops_after_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let trace_path = dir.path().join("trace.jsonl");
    let output = bin()
        .args(["query", "--mem"])
        .arg(&mem)
        .args([
            "--question",
            "who waves",
            "--choice",
            "w",
            "--choice",
            "x",
            "--choice",
            "y",
            "--choice",
            "z",
            "--gamma",
            "1.3862943611198906",
            "--trace",
        ])
        .arg(&trace_path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    assert_eq!(trace.lines().count(), 3);
}

#[test]
fn verify_ib_sweep_passes() {
    let output = bin()
        .args(["verify-ib", "--instances", "500", "--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let out = stdout_of(&output);
    assert!(out.contains("worst_slack_pred="));
    assert!(out.contains("worst_slack_comp="));
}

#[test]
fn verify_ib_builtin_chain_prints_zero_slacks() {
    let output = bin().args(["verify-ib", "--builtin-chain"]).output().unwrap();
    assert_eq!(exit_code(&output), 0);
    assert!(stdout_of(&output).starts_with("slacks 0.0 0.0"));
}

#[test]
fn verify_ib_invalid_instance_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    // Joint rows sum to 1.1: invalid distribution.
    std::fs::write(
        &path,
        "2 2 2\n0.5 0.6\n0.0 0.0\n1 0\n0 1\n1 0\n0 1\n0.5 0.5\n",
    )
    .unwrap();
    let output = bin()
        .args(["verify-ib", "--instance"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn verify_ib_valid_instance_file_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ok.txt");
    std::fs::write(
        &path,
        "2 2 2\n0.5 0.0\n0.0 0.5\n1 0\n0 1\n1 0\n0 1\n0.5 0.5\n",
    )
    .unwrap();
    let output = bin()
        .args(["verify-ib", "--instance"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    assert!(stdout_of(&output).contains("slack_pred="));
}

#[test]
fn train_toy_defaults_improve_reward() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.txt");
    let output = bin()
        .args(["train-toy", "--seed", "42", "--report"])
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let report = std::fs::read_to_string(&report_path).unwrap();
    let mean_reward_of = |line: &str| -> f64 {
        line.split_whitespace()
            .find_map(|f| f.strip_prefix("mean_reward="))
            .unwrap()
            .parse()
            .unwrap()
    };
    let lines: Vec<&str> = report.lines().collect();
    let first = mean_reward_of(lines.first().unwrap());
    let last = mean_reward_of(lines.last().unwrap());
    assert!(last > first, "mean reward did not improve: {first} -> {last}");
    // The checkpoint lands next to the report.
    assert!(dir.path().join("report.mmpo").exists());
}

#[test]
fn stats_reports_counts_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let output = bin().args(["stats", "--mem"]).arg(&mem).output().unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let out = stdout_of(&output);
    assert!(out.contains("sensory=2 episodic=2 concepts=2"));
    assert!(out.contains("mean_merge=1.0000"));
    assert!(out.contains("degree_hist=1:2"));
}

#[test]
fn stats_empty_snapshot_is_all_zero() {
    // Build from a constant stream with no subtitles: one item per clip,
    // but schema may still form from captions; instead save an empty
    // pyramid through the library to exercise the zero path.
    let dir = tempfile::tempdir().unwrap();
    let pyramid = pyramem::MemoryPyramid::empty(8, 1);
    pyramem::store::save_memory(&pyramid, dir.path()).unwrap();
    let output = bin().args(["stats", "--mem"]).arg(dir.path()).output().unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let out = stdout_of(&output);
    assert!(out.contains("sensory=0 episodic=0 concepts=0"));
    assert!(out.contains("mean_merge=0.0000"));
}

#[test]
fn export_graph_edge_count_matches_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let mem = build_fixture_snapshot(dir.path());
    let out_dir = dir.path().join("graph");
    let output = bin()
        .args(["export-graph", "--mem"])
        .arg(&mem)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    let edges = std::fs::read_to_string(out_dir.join("edges.tsv")).unwrap();
    let loaded = pyramem::store::load_memory(&mem).unwrap();
    assert_eq!(edges.lines().count(), loaded.schema.edges.len());
    assert!(out_dir.join("graph.rec").exists());
}

#[test]
fn build_from_features_works() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("features.tsv");
    // One clip, constant features except a jump at index 10.
    let mut text = String::new();
    for i in 0..30 {
        let value = if i < 10 { "0.0,0.0" } else { "5.0,5.0" };
        text.push_str(&format!("0\t{}\t{}\n", (i + 1) * 40, value));
    }
    std::fs::write(&features, text).unwrap();
    let mem = dir.path().join("mem");
    let output = bin()
        .args(["build", "--features"])
        .arg(&features)
        .arg("--out")
        .arg(&mem)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", stderr_of(&output));
    assert!(stdout_of(&output).starts_with("sensory=1 episodic=1"));
}
