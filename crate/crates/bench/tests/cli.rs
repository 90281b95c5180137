use std::path::{Path, PathBuf};
use std::process::Command;

use dsm_bench::CSV_HEADER;
use dsm_core::sim::{read_jsonl, write_jsonl, Actor, EventKind, OpKind, OpSpec, ScriptStep, SimConfig};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dsm-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin(name: &str) -> Command {
    Command::new(match name {
        "bench" => env!("CARGO_BIN_EXE_bench"),
        "dsm-sim" => env!("CARGO_BIN_EXE_dsm-sim"),
        _ => env!("CARGO_BIN_EXE_dsm-check"),
    })
}

#[test]
fn bench_writes_csv_and_svg() {
    let dir = scratch("bench");
    let out = bin("bench")
        .args(["--scenario", "node-count", "--algo", "deram,mwabd-full", "--sweep", "13,16", "--rounds", "1", "--svg", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.join("node-count.svg").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_config_file_overrides_flags() {
    let dir = scratch("bench-config");
    let cfg = dir.join("sweep.toml");
    std::fs::write(&cfg, "scenario = \"object-count\"\nalgo = \"mwabd-cluster\"\nsweep = [2]\nrounds = 1\n").unwrap();
    let out = bin("bench").arg("--config").arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("object-count,mwabd-cluster,") && l.split(',').nth(3) == Some("2")));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_rejects_bad_arguments() {
    let out = bin("bench").args(["--scenario", "latency"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin("bench").args(["--k", "6", "--sweep", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn simulate(dir: &Path) -> PathBuf {
    let printed = bin("dsm-sim").arg("--print-config").output().unwrap();
    assert!(printed.status.success());
    let defaults = SimConfig::from_toml(&String::from_utf8(printed.stdout).unwrap()).unwrap();
    assert_eq!(defaults, SimConfig::default());
    let step = |at_ms, op| ScriptStep { at_ms, actor: Actor::Client(0), op };
    let cfg = SimConfig {
        seed: 3,
        script: vec![step(0.0, OpSpec::Write { obj: 1, size: 40 }), step(900.0, OpSpec::Read { obj: 1 })],
        ..defaults
    };
    let path = dir.join("sim.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let trace = dir.join("trace.jsonl");
    let out = bin("dsm-sim").arg("--config").arg(&path).arg("--trace").arg(&trace).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ops"], 2);
    assert_eq!(summary["oracle_ok"], true);
    trace
}

#[test]
fn sim_trace_passes_check_and_tampering_is_caught() {
    let dir = scratch("sim");
    let trace = simulate(&dir);
    let ok = bin("dsm-check").arg(&trace).arg("--json").output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));

    let mut events = read_jsonl(std::io::BufReader::new(std::fs::File::open(&trace).unwrap())).unwrap();
    let read_op = events.iter().find(|e| e.kind == EventKind::Invoke && e.op_kind == Some(OpKind::Read)).unwrap().op;
    let read = events.iter_mut().find(|e| e.kind == EventKind::Respond && e.op == read_op).expect("read response in trace");
    read.digest = Some(read.digest.unwrap() ^ 1);
    let bad = dir.join("tampered.jsonl");
    write_jsonl(std::fs::File::create(&bad).unwrap(), &events).unwrap();
    let out = bin("dsm-check").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}
