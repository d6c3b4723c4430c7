use std::path::Path;
use std::process::{Command, Output};

use dlsim::experiment::CSV_HEADER;

fn dlsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlsim")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const MINIMAL: &str = r#"{
  "protocol": "clm",
  "nodes": 4,
  "workload": { "contention": 0.0, "clients": 4, "duration_s": 6, "warmup_s": 2, "interval_s": 0.5 }
}
"#;

#[test]
fn minimal_run_writes_one_row_per_interval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MINIMAL);
    let out = dir.path().join("out");
    let o = dlsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // (6 - 2) / 0.5
    assert_eq!(lines.count(), 8);
    assert!(out.join("summary.txt").exists());
    let verdict: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict[0]["passed"], true);
}

#[test]
fn same_seed_gives_identical_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &MINIMAL.replace("0.0", "0.5"));
    let mut csvs = Vec::new();
    let mut svgs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("o{k}"));
        let o = dlsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "42"]);
        assert_eq!(o.status.code(), Some(0));
        let csv = out.join("results.csv");
        let svg = dir.path().join(format!("p{k}.svg"));
        assert_eq!(dlsim(&["plot", "--csv", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]).status.code(), Some(0));
        csvs.push(std::fs::read(csv).unwrap());
        svgs.push(std::fs::read(svg).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(svgs[0], svgs[1]);
}

#[test]
fn group_larger_than_cluster_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = "{\n  \"protocol\": \"pdl\",\n  \"nodes\": 3,\n  \"quorum\": {\n    \"group_size\": 5\n  }\n}\n";
    let cfg = write_config(dir.path(), "g.json", body);
    let o = dlsim(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("quorum.group_size"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.json", "{\n  \"protocol\": \"ldl\",\n  \"nodez\": 4\n}\n");
    let o = dlsim(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nodez") && err.contains("line 3"), "{err}");
}

#[test]
fn checker_failure_exits_3() {
    // A saturated hot lock across three regions keeps waiters queued past the
    // liveness grace of a 200 ms lease.
    let body = r#"{
  "protocol": "ldl", "nodes": 16, "seed": 1,
  "network": { "regions": ["a", "b", "c"], "rtt_ms": [[1, 80, 140], [80, 1, 120], [140, 120, 1]], "jitter": 0.1, "skew_ms": 50 },
  "workload": { "resources": 100, "clients": 32, "contention": 0.4, "locality": 0.9, "duration_s": 15, "warmup_s": 3 }
}"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", body);
    let out = dir.path().join("o");
    let o = dlsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    let verdict = std::fs::read_to_string(out.join("verdict.json")).unwrap();
    assert!(verdict.contains("Stalled"));
}

#[test]
fn malformed_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "not,a,results,file\n").unwrap();
    let o = dlsim(&["plot", "--csv", csv.to_str().unwrap(), "--out", dir.path().join("x.svg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_var_seeds_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MINIMAL);
    let out = dir.path().join("o");
    let o = dlsim(&[
        "sweep", "--var", "contention", "--values", "0,50", "--protocols", "clm,ldl", "--config", &cfg, "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 8);
    let bad = dlsim(&["sweep", "--var", "colour", "--values", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let unknown = dlsim(&["sweep", "--preset", "fig9", "--out", out.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
}
