use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn orbitemu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbitemu")).current_dir(dir).args(args).output().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(o.stderr.trim_ascii()).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&o.stderr)))
}

fn short_wetlinks(dir: &Path) {
    let o = orbitemu(dir, &["gen", "--preset", "wetlinks", "--duration", "60", "--out", "wl.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_writes_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = orbitemu(dir.path(), &["gen", "--preset", "wetlinks"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["shells"][0]["planes"], 10);
    assert_eq!(v["epoch"], "2023-09-15T00:00:00Z");
    let again = orbitemu(dir.path(), &["gen", "--preset", "wetlinks"]);
    assert_eq!(o.stdout, again.stdout);

    let bad = orbitemu(dir.path(), &["gen", "--preset", "atlantis"]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stderr_json(&bad)["error"], "config");
}

#[test]
fn precompute_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    short_wetlinks(dir.path());
    for (out, workers) in [("a.jsonl", "1"), ("b.jsonl", "3")] {
        let o = orbitemu(dir.path(), &["precompute", "--scenario", "wl.json", "--workers", workers, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 13);
}

#[test]
fn validate_reports_digest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    short_wetlinks(dir.path());
    assert!(orbitemu(dir.path(), &["precompute", "--scenario", "wl.json", "--out", "t.jsonl"]).status.success());
    let ok = orbitemu(dir.path(), &["validate", "--scenario", "wl.json", "--trace", "t.jsonl"]);
    assert!(ok.status.success());

    let o = orbitemu(dir.path(), &["gen", "--preset", "wetlinks", "--duration", "120", "--out", "other.json"]);
    assert!(o.status.success());
    let bad = orbitemu(dir.path(), &["validate", "--scenario", "other.json", "--trace", "t.jsonl"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("digest mismatch"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = orbitemu(dir.path(), &["validate", "--scenario", "nope.json"]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(stderr_json(&missing)["error"], "io");

    fs::write(dir.path().join("junk.json"), "{\"epoch\": 3}").unwrap();
    assert_eq!(orbitemu(dir.path(), &["validate", "--scenario", "junk.json"]).status.code(), Some(2));

    short_wetlinks(dir.path());
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("wl.json")).unwrap()).unwrap();
    v["node_budget"] = 100.into();
    fs::write(dir.path().join("big.json"), v.to_string()).unwrap();
    let o = orbitemu(dir.path(), &["precompute", "--scenario", "big.json", "--out", "t.jsonl"]);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(stderr_json(&o)["error"], "budget_exceeded");

    let o = orbitemu(dir.path(), &["run", "--trace", "t.jsonl", "--backend", "linux"]);
    assert!(matches!(o.status.code(), Some(3) | Some(4)));

    assert_eq!(orbitemu(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn run_writes_step_reports() {
    let dir = tempfile::tempdir().unwrap();
    short_wetlinks(dir.path());
    assert!(orbitemu(dir.path(), &["precompute", "--scenario", "wl.json", "--out", "t.jsonl"]).status.success());
    fs::write(dir.path().join("cfg.json"), r#"{"backend": "recording", "realtime-factor": 1000.0, "out": "runs"}"#)
        .unwrap();
    let o = orbitemu(dir.path(), &["run", "--config", "cfg.json", "--scenario", "wl.json", "--trace", "t.jsonl"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports = fs::read_to_string(dir.path().join("runs/step_reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 12);
    let csv = fs::read_to_string(dir.path().join("runs/step_summary.csv")).unwrap();
    assert!(csv.starts_with("step_index,lag_ms,ops_applied\n1,"));
    assert!(dir.path().join("runs/bringup.json").exists());
}

#[test]
fn fidelity_and_viz_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = orbitemu(dir.path(), &["fidelity", "wetlinks", "--duration", "200", "--out", "fid"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = fs::read_to_string(dir.path().join("fid/measurements.csv")).unwrap();
    assert!(m.starts_with("kind,t_offset_s,value,unit,hops,session\n"));
    let h = fs::read_to_string(dir.path().join("fid/handovers.csv")).unwrap();
    assert!(h.starts_with("t_offset_s,ground_station,from,to\n"));

    short_wetlinks(dir.path());
    assert!(orbitemu(dir.path(), &["precompute", "--scenario", "wl.json", "--out", "t.jsonl"]).status.success());
    let o = orbitemu(dir.path(), &["export-viz", "--scenario", "wl.json", "--trace", "t.jsonl", "--out", "v.czml"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("v.czml")).unwrap()).unwrap();
    assert_eq!(doc[0]["id"], "document");
}

#[test]
fn bench_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = orbitemu(dir.path(), &["bench", "bringup", "--sizes", "3,4", "--out", "b"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("b/bringup.csv")).unwrap().lines().count(), 3);

    let o = orbitemu(
        dir.path(),
        &[
            "bench",
            "updates",
            "--sizes",
            "3",
            "--duration",
            "30",
            "--realtime-factor",
            "inf",
            "--backend",
            "simulated",
            "--out",
            "u",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("u/update_steps.jsonl")).unwrap().lines().count(), 6);

    let o = orbitemu(dir.path(), &["bench", "cpu", "--interval", "0.1", "--duration", "0.3", "--out", "c"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["status"] == "sampled" || v["status"] == "unsupported");
}
