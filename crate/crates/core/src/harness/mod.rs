//! Scenario files, Monte Carlo runs, metrics and result files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{load_config, Alpha, InitialOffsets, PriorMean, Scenario, ScenarioConfig};
pub use metrics::{initial_rmse, rmse_series, tracking_error_vs_nodes, tracking_series, TrackingRow};
pub use output::{summarize, write_errors_csv, write_outputs, write_summary};
pub use run::{run_built, run_scenario, run_single, RunResult, ScenarioResults, Simulated};
