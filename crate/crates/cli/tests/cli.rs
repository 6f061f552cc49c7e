//! Drives the binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzcoin-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
name = "small"
hosts = 5
block_bytes = 8192
duration_s = 10
stop_after_blocks = 4
[link]
rtt_ms = 20
"#;

#[test]
fn run_writes_metrics_and_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small", SMALL);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let first = lab(&["--out-dir", out, "run", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let trace = std::fs::read(dir.path().join("out/small.trace.csv")).unwrap();
    let metrics = std::fs::read_to_string(dir.path().join("out/small.metrics.json")).unwrap();
    assert!(metrics.contains("\"safe\": true"));
    assert!(String::from_utf8_lossy(&trace).starts_with("time_ms,node,event,bytes,height\n"));

    assert!(lab(&["--out-dir", out, "run", &cfg]).status.success());
    assert_eq!(std::fs::read(dir.path().join("out/small.trace.csv")).unwrap(), trace);
}

#[test]
fn exit_status_follows_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let split = SMALL.replace("hosts = 5", "hosts = 5\ntopology = \"flat\"\nquorum = \"classic\"")
        + "[[adversary]]\nkind = \"equivocating-leader\"\ncount = 1\n";
    let split = split.replace("stop_after_blocks = 4\n", "");
    let bad = lab(&["--out-dir", out, "run", &write_config(dir.path(), "split", &split)]);
    assert_eq!(bad.status.code(), Some(2), "{}", stdout(&bad));
    assert!(stdout(&bad).contains("FAILED"));

    // the same attack against overlapping quorums is harmless
    let guarded = split.replace("quorum = \"classic\"", "quorum = \"intersecting\"");
    let ok = lab(&["--out-dir", out, "run", &write_config(dir.path(), "guarded", &guarded)]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
}

#[test]
fn too_many_withheld_votes_stall_without_failing_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("hosts = 5", "hosts = 8") + "[[adversary]]\nkind = \"vote-withholder\"\ncount = 3\n";
    let o = lab(&["--out-dir", dir.path().to_str().unwrap(), "run", &write_config(dir.path(), "stall", &body)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("committed       0"), "{text}");
    assert!(text.contains("truncated       true"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("rtt_ms = 20", "rtt = 20");
    let o = lab(&["run", &write_config(dir.path(), "bad", &body)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("link"));
}

#[test]
fn sweep_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small", SMALL);
    let out = dir.path().to_str().unwrap();
    let o = lab(&["--out-dir", out, "sweep", &cfg, "--axis", "hosts", "--values", "4,7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("small-sweep-hosts.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "hosts,committed_blocks,mean_latency_s,throughput_tps,bytes_per_host_mean,truncated,safe,error");
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("small-hosts-7.metrics.json").exists());

    let single = lab(&["--out-dir", out, "sweep", &cfg, "--axis", "blocksize", "--values", "4096"]);
    assert!(single.status.success());
    let descending = lab(&["--out-dir", out, "sweep", &cfg, "--axis", "hosts", "--values", "7,4"]);
    assert_eq!(descending.status.code(), Some(1));
}

#[test]
fn analysis_examples() {
    let o = lab(&["analyze", "doublespend", "-q", "0", "-z", "6", "--format", "csv"]);
    assert_eq!(stdout(&o), "q,z,probability,attacker_dominant\n0,6,0.0000000000,false\n");
    let o = lab(&["analyze", "selfish", "-c", "0.25", "-n", "2", "--format", "csv"]);
    assert_eq!(stdout(&o), "c,n,gain,profitable\n0.25,2,0.2562,true\n");
    let o = lab(&["analyze", "membership", "--published-table"]);
    assert_eq!(stdout(&o).lines().count(), 13);
    let o = lab(&["analyze", "selfish", "-c", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
