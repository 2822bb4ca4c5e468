use std::path::Path;
use std::process::{Command, Output};

use gplfd::io::{RunConfig, RunManifest};

fn gplfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gplfd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gplfd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn err(args: &[&str]) -> String {
    let out = gplfd(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates data and fits a small policy; returns the data directory and
/// policy path.
fn small_policy(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data");
    ok(&["gen-data", "--out-dir", s(&data), "--set", "data.door.radii=[0.7, 0.9]"]);
    let policy = dir.join("policy.json");
    ok(&[
        "fit",
        s(&data.join("demo_00.csv")),
        s(&data.join("demo_01.csv")),
        s(&data.join("demo_02.csv")),
        s(&data.join("demo_03.csv")),
        "--out",
        s(&policy),
        "--set",
        "policy.grid_size=30",
        "--set",
        "optimizer.starts=3",
    ]);
    (data, policy)
}

#[test]
fn fit_needs_two_demonstrations() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--out-dir", s(&data)]);
    let msg = err(&["fit", s(&data.join("demo_00.csv")), "--out", s(&dir.path().join("p.json"))]);
    assert!(msg.contains("at least 2"), "{msg}");
    assert!(!dir.path().join("p.json").exists());
}

#[test]
fn malformed_rows_are_reported_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "# format: gplfd-demo v1\nt,x,y,z,qw,qx,qy,qz\n0,0,0,0,1,0,0,0\n0.1,0,zero,0,1,0,0,0\n").unwrap();
    let other = dir.path().join("other.csv");
    std::fs::write(&other, "# format: gplfd-demo v1\nt,x,y,z,qw,qx,qy,qz\n0,0,0,0,1,0,0,0\n1,1,0,0,1,0,0,0\n").unwrap();
    let msg = err(&["fit", s(&bad), s(&other), "--out", s(&dir.path().join("p.json"))]);
    assert!(msg.contains("line 4"), "{msg}");
}

#[test]
fn invalid_overrides_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let msg = err(&["gen-data", "--out-dir", s(dir.path()), "--set", "alignment.rotation_weight=2"]);
    assert!(msg.starts_with("error:"), "{msg}");
    err(&["gen-data", "--out-dir", s(dir.path()), "--set", "nonsense.key=1"]);
}

#[test]
fn query_marks_extrapolated_rows_and_adapt_needs_normalized_via_points() {
    let dir = tempfile::tempdir().unwrap();
    let (data, policy) = small_policy(dir.path());

    let query = dir.path().join("query.csv");
    ok(&["query", "--policy", s(&policy), "--out", s(&query), "--from", "-0.5", "--to", "1.5"]);
    let text = std::fs::read_to_string(&query).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    for r in &rows {
        assert_eq!(r[1] == 1.0, !(0.0..=1.0).contains(&r[0]));
    }

    let adapted = dir.path().join("adapted.csv");
    ok(&["adapt", "--policy", s(&policy), "--via", s(&data.join("via.csv")), "--out", s(&adapted)]);
    assert!(std::fs::read_to_string(&adapted).unwrap().starts_with("# format: gplfd-adapt v1"));

    // Raw (not time-normalized) files are refused as via-points.
    let msg = err(&["adapt", "--policy", s(&policy), "--via", s(&data.join("truth.csv")), "--out", s(&adapted)]);
    assert!(msg.contains("normalized"), "{msg}");
}

#[test]
fn manifests_record_config_and_replay_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, policy) = small_policy(dir.path());
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "seed = 3\n[via]\nposition_strength = 0.001\n").unwrap();
    let mse = dir.path().join("mse.csv");
    let printed = ok(&[
        "eval",
        "--policy",
        s(&policy),
        "--truth",
        s(&data.join("truth.csv")),
        "--out",
        s(&mse),
        "--config",
        s(&config),
        "--set",
        "via.rotation_strength=0.01",
    ]);
    assert_eq!(printed, std::fs::read_to_string(&mse).unwrap());

    let manifest_path = dir.path().join("mse.csv.manifest.json");
    let m = RunManifest::read(&manifest_path).unwrap();
    assert_eq!(m.command, "eval");
    assert_eq!(m.seed, 3);
    let recorded = RunConfig::from_toml(&m.config).unwrap();
    assert_eq!(recorded.via.position_strength, 0.001);
    assert_eq!(recorded.via.rotation_strength, 0.01);
    assert_eq!(recorded.hash(), m.config_sha256);

    assert!(ok(&["replay", s(&manifest_path)]).contains("reproduced 1 output file"));

    // A changed input is caught before rerunning.
    let original = std::fs::read(&policy).unwrap();
    std::fs::write(&policy, b"{}").unwrap();
    assert!(err(&["replay", s(&manifest_path)]).contains("changed"));
    std::fs::write(&policy, original).unwrap();

    // A tampered manifest digest is reported as an output mismatch.
    let mut tampered = m.clone();
    tampered.outputs[0].sha256 = "0".repeat(64);
    let tampered_path = dir.path().join("tampered.json");
    tampered.write(&tampered_path).unwrap();
    assert!(err(&["replay", s(&tampered_path)]).contains("outputs differ"));
}

#[test]
fn simulate_writes_a_bounded_stiffness_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (_, policy) = small_policy(dir.path());
    let trace = dir.path().join("trace.csv");
    ok(&["simulate", "--policy", s(&policy), "--out", s(&trace), "--set", "simulation.initial_error=[0.1,0,0,0,0,0]"]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let header: Vec<&str> = text.lines().find(|l| l.starts_with("t,")).unwrap().split(',').collect();
    let k = header.iter().position(|c| *c == "k_x").unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows.iter().all(|r| (100.0..=500.0).contains(&r[k])));

    let msg = err(&[
        "simulate",
        "--policy",
        s(&policy),
        "--out",
        s(&trace),
        "--set",
        "environment.force=spring-to-truth",
    ]);
    assert!(msg.contains("--truth"), "{msg}");
}
