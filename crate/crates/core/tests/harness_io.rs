use std::fs;

use distloc_core::harness::output::{read_errors_csv, write_empty_errors_csv, ERROR_HEADER};
use distloc_core::harness::{run_scenario, summarize, write_outputs, ScenarioConfig};

fn pair(steps: usize, record_every: usize) -> ScenarioConfig {
    let text = format!(
        r#"{{
            "name": "pair",
            "seed": 9,
            "runs": 2,
            "steps": {steps},
            "record_every": {record_every},
            "network": {{ "positions": [[0, 0], [3, -2]], "edges": [[0, 1]] }},
            "model": {{
                "motion": {{ "kind": "constant_velocity", "tau": 0.1, "sigma_x": 1.0 }},
                "observation": {{ "kind": "position", "sigma_y": 0.5 }}
            }},
            "estimator": {{ "kind": "rml", "schedule": {{ "gamma0": 0.01, "hold_until": 10, "decay_exponent": 0.8 }} }}
        }}"#
    );
    ScenarioConfig::from_json(&text).unwrap()
}

#[test]
fn errors_round_trip_through_csv() {
    let results = run_scenario(&pair(3, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&results, dir.path()).unwrap();

    let rows = read_errors_csv(dir.path().join("errors_run0.csv")).unwrap();
    // 3 steps x 2 directed edges.
    assert_eq!(rows.len(), 6);
    let run = &results.runs[0];
    for (k, row) in rows.iter().enumerate() {
        let (rec, e) = (k / 2, k % 2);
        assert_eq!(row.step, rec + 1);
        assert_eq!((row.edge_src, row.edge_dst), run.edges[e]);
        let err = run.error(rec, e);
        assert_eq!(row.err_x, err[0]);
        assert_eq!(row.err_y, err[1]);
    }
    // Each end estimates its own direction; the two stay close but are not tied.
    assert!((rows[0].err_x + rows[1].err_x).abs() < 1e-2);
}

#[test]
fn sparse_recording_keeps_step_labels() {
    let results = run_scenario(&pair(10, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&results, dir.path()).unwrap();
    let rows = read_errors_csv(dir.path().join("errors_run1.csv")).unwrap();
    let steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
    assert_eq!(steps, [5, 5, 10, 10]);

    let rmse = fs::read_to_string(dir.path().join("rmse.csv")).unwrap();
    let lines: Vec<&str> = rmse.lines().collect();
    assert_eq!(lines[0], "step,rmse");
    assert_eq!(lines.len(), 1 + 1 + 10);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[11].starts_with("10,"));
}

#[test]
fn header_only_file_reads_back_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("errors.csv");
    write_empty_errors_csv(fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().trim_end(), ERROR_HEADER.join(","));
    assert!(read_errors_csv(&path).unwrap().is_empty());
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = pair(20, 1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files_a = write_outputs(&run_scenario(&cfg).unwrap(), a.path()).unwrap();
    write_outputs(&run_scenario(&cfg).unwrap(), b.path()).unwrap();
    for path in files_a {
        let name = path.file_name().unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }

    let mut other = cfg.clone();
    other.seed += 1;
    let c = tempfile::tempdir().unwrap();
    write_outputs(&run_scenario(&other).unwrap(), c.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join("rmse.csv")).unwrap(),
        fs::read(c.path().join("rmse.csv")).unwrap()
    );
}

#[test]
fn summary_json_describes_the_run() {
    let results = run_scenario(&pair(30, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&results, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();

    let expected = summarize(&results);
    assert_eq!(json["config"]["name"], "pair");
    assert_eq!(json["rounds"], 1);
    assert_eq!(json["diameter"], 1);
    assert_eq!(json["runs"].as_array().unwrap().len(), 2);
    assert_eq!(json["final_rmse"].as_f64().unwrap(), expected.final_rmse);
    let est = &json["runs"][0]["estimates"][0];
    assert_eq!(est["truth"].as_array().unwrap().len(), 2);
    // Truth is E(p_0 - p_1) for the edge 0 -> 1.
    assert_eq!(est["src"], 0);
    assert_eq!(est["truth"][0].as_f64().unwrap(), -3.0);
    assert_eq!(est["truth"][1].as_f64().unwrap(), 2.0);
}
