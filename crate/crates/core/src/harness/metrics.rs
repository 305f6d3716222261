//! Summaries over Monte Carlo runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;

use super::config::{InitialOffsets, NetworkConfig, ScenarioConfig};
use super::run::{run_scenario, RunResult};

/// Root mean squared offset error per step, averaged over runs and directed
/// edges: `sqrt(Σ_runs Σ_edges ‖θ* − θ_n‖² / (runs |E|))`.
pub fn rmse_series(runs: &[RunResult]) -> Vec<f64> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let denom = (runs.len() * first.edges.len()) as f64;
    (0..first.steps)
        .map(|n| (runs.iter().map(|r| r.sq_error[n]).sum::<f64>() / denom).sqrt())
        .collect()
}

/// The same average for the starting offsets.
pub fn initial_rmse(runs: &[RunResult]) -> f64 {
    let Some(first) = runs.first() else {
        return 0.0;
    };
    let denom = (runs.len() * first.edges.len()) as f64;
    (runs.iter().map(|r| r.initial_sq_error).sum::<f64>() / denom).sqrt()
}

/// Mean position error over runs and nodes, per step.
pub fn tracking_series(runs: &[RunResult]) -> Vec<f64> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let denom = (runs.len() * first.nodes) as f64;
    (0..first.steps)
        .map(|n| {
            runs.iter()
                .map(|r| r.tracking[n * r.nodes..(n + 1) * r.nodes].iter().sum::<f64>())
                .sum::<f64>()
                / denom
        })
        .collect()
}

/// Mean and standard error of per-run averages.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub nodes: usize,
    pub mean_abs_error: f64,
    pub std_error: f64,
}

/// Chain of `len` nodes spaced one unit apart along the first axis.
pub fn chain_network(len: usize, free_dim: usize) -> NetworkConfig {
    NetworkConfig {
        positions: (0..len)
            .map(|i| {
                let mut p = vec![0.0; free_dim];
                p[0] = i as f64;
                p
            })
            .collect(),
        edges: (1..len).map(|i| [i - 1, i]).collect(),
    }
}

/// Average tracking error with known offsets on chains of each length.
/// The template supplies models, runs, steps and seed.
pub fn tracking_error_vs_nodes(lengths: &[usize], template: &ScenarioConfig) -> Result<Vec<TrackingRow>> {
    let free_dim = template.free_components().len();
    lengths
        .iter()
        .map(|&len| {
            if len == 0 {
                return Err(Error::InvalidArgument("chain length must be at least 1".into()));
            }
            let mut cfg = template.clone();
            cfg.network = chain_network(len, free_dim);
            cfg.rounds = None;
            cfg.estimator = EstimatorConfig::None;
            cfg.initial_offsets = InitialOffsets::Truth;
            cfg.record_every = cfg.steps;
            let results = run_scenario(&cfg)?;
            let per_run: Vec<f64> = results.runs.iter().map(RunResult::mean_tracking_error).collect();
            let (mean, se) = mean_and_se(&per_run);
            Ok(TrackingRow {
                nodes: len,
                mean_abs_error: mean,
                std_error: se,
            })
        })
        .collect()
}
