use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const PAIR: &str = r#"{
    "name": "pair",
    "seed": 3,
    "steps": 40,
    "network": { "positions": [[0, 0], [3, -2], [5, 1]], "edges": [[0, 1], [1, 2]] },
    "model": {
        "motion": { "kind": "constant_velocity", "tau": 0.1, "sigma_x": 1.0 },
        "observation": { "kind": "position", "sigma_y": 0.5 }
    },
    "estimator": { "kind": "rml", "schedule": { "gamma0": 0.01, "hold_until": 10, "decay_exponent": 0.8 } }
}"#;

const CHAIN: &str = r#"{
    "runs": 4,
    "steps": 30,
    "network": { "positions": [[0.0], [1.0]], "edges": [[0, 1]] },
    "model": {
        "motion": { "kind": "scalar", "a": 1.0, "q": 1.0 },
        "observation": { "kind": "position", "sigma_y": 1.0, "alpha": 1.0 }
    },
    "estimator": { "kind": "none" },
    "initial_offsets": "truth"
}"#;

fn distloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distloc")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pair.json", PAIR);
    let out = dir.path().join("out");
    let o = distloc(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--runs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("pair: 2 run(s), 40 steps"));
    for f in ["errors_run0.csv", "errors_run1.csv", "rmse.csv", "tracking.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let errors = fs::read_to_string(out.join("errors_run0.csv")).unwrap();
    // Header plus 40 steps x 4 directed edges.
    assert_eq!(errors.lines().count(), 1 + 40 * 4);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["runs"], 2);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pair.json", PAIR);
    let out = dir.path().join("sweep");
    let o = distloc(&["sweep", "--config", &cfg, "--param", "K=1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("K=1/rmse.csv").is_file());
    assert!(out.join("K=2/rmse.csv").is_file());
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("K,1,"));
}

#[test]
fn sweep_rejects_unknown_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pair.json", PAIR);
    let out = dir.path().join("sweep");
    let o = distloc(&["sweep", "--config", &cfg, "--param", "colour=1", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn chain_reports_each_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "chain.json", CHAIN);
    let out = dir.path().join("chain");
    let o = distloc(&["chain", "--config", &cfg, "--lengths", "1,3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("tracking_vs_nodes.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "nodes,mean_abs_error,std_error");
    assert!(lines[1].starts_with("1,"));
    assert!(lines[2].starts_with("3,"));
}

#[test]
fn verify_passes() {
    let o = distloc(&["verify", "--seed", "11"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("PASS")).count(), 4);
}

#[test]
fn bad_config_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &PAIR.replace("\"sigma_y\": 0.5", "\"sigma_y\": -1"));
    let o = distloc(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:"), "{err}");

    let missing = distloc(&["run", "--config", "/nonexistent.json", "--out", "/tmp/x"]);
    assert!(!missing.status.success());
}
