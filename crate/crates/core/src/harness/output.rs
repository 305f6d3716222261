//! CSV and JSON outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::config::ScenarioConfig;
use super::metrics::{initial_rmse, rmse_series, tracking_series};
use super::run::{RunDiagnostics, RunResult, ScenarioResults};

pub const ERROR_HEADER: [&str; 5] = ["step", "edge_src", "edge_dst", "err_x", "err_y"];

/// Per-edge offset errors of one run. Scalar offsets leave `err_y` at zero.
pub fn write_errors_csv<W: Write>(run: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERROR_HEADER)?;
    for (row, step) in run.recorded_steps.iter().enumerate() {
        for (e, &(r, j)) in run.edges.iter().enumerate() {
            let err = run.error(row, e);
            let ey = err.get(1).copied().unwrap_or(0.0);
            w.serialize((step, r, j, err[0], ey))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header-only error file, for scenarios without recorded rows.
pub fn write_empty_errors_csv<W: Write>(out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERROR_HEADER)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub step: usize,
    pub edge_src: usize,
    pub edge_dst: usize,
    pub err_x: f64,
    pub err_y: f64,
}

pub fn read_errors_csv(path: impl AsRef<Path>) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ErrorRow>, _>>()?)
}

/// `step,rmse` with the starting offsets on the step-zero row.
pub fn write_series_csv<W: Write>(name: &str, initial: Option<f64>, series: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", name])?;
    if let Some(v) = initial {
        w.serialize((0usize, v))?;
    }
    for (k, v) in series.iter().enumerate() {
        w.serialize((k + 1, v))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEstimate {
    pub src: usize,
    pub dst: usize,
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub final_sq_error: f64,
    pub mean_tracking_error: f64,
    pub diagnostics: RunDiagnostics,
    pub estimates: Vec<EdgeEstimate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config: ScenarioConfig,
    pub rounds: usize,
    pub diameter: usize,
    pub warnings: Vec<String>,
    pub initial_rmse: f64,
    pub final_rmse: f64,
    pub runs: Vec<RunSummary>,
}

pub fn summarize(results: &ScenarioResults) -> Summary {
    let s = &results.scenario;
    let rmse = rmse_series(&results.runs);
    let runs = results
        .runs
        .iter()
        .map(|run| RunSummary {
            run: run.run,
            final_sq_error: run.sq_error.last().copied().unwrap_or(run.initial_sq_error),
            mean_tracking_error: run.mean_tracking_error(),
            diagnostics: run.diagnostics.clone(),
            estimates: run
                .edges
                .iter()
                .map(|&(r, j)| EdgeEstimate {
                    src: r,
                    dst: j,
                    estimate: run.final_params.free(r, j).iter().copied().collect(),
                    truth: s.truth.free(r, j).iter().copied().collect(),
                })
                .collect(),
        })
        .collect();
    Summary {
        config: s.config.clone(),
        rounds: s.net.rounds,
        diameter: s.net.topology.diameter(),
        warnings: s.warnings.clone(),
        initial_rmse: initial_rmse(&results.runs),
        final_rmse: rmse.last().copied().unwrap_or(0.0),
        runs,
    }
}

pub fn write_summary(summary: &Summary, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `errors_run<k>.csv`, `rmse.csv`, `tracking.csv` and `summary.json`
/// into `dir` and returns the written paths.
pub fn write_outputs(results: &ScenarioResults, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &results.runs {
        let path = dir.join(format!("errors_run{}.csv", run.run));
        write_errors_csv(run, fs::File::create(&path)?)?;
        written.push(path);
    }
    let path = dir.join("rmse.csv");
    write_series_csv(
        "rmse",
        Some(initial_rmse(&results.runs)),
        &rmse_series(&results.runs),
        fs::File::create(&path)?,
    )?;
    written.push(path);
    let path = dir.join("tracking.csv");
    write_series_csv("mean_abs_error", None, &tracking_series(&results.runs), fs::File::create(&path)?)?;
    written.push(path);
    let path = dir.join("summary.json");
    write_summary(&summarize(results), &path)?;
    written.push(path);
    Ok(written)
}
