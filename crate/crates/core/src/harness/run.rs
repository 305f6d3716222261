//! Monte Carlo orchestration.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{EstimatorDiagnostics, OnlineEstimator};
use crate::filter::{DistributedFilter, NodeFilterState};
use crate::model::simulate_target_with;
use crate::network::LocalizationParams;
use crate::rng::{self, Purpose};
use crate::sim::{local_state, observe_network};

use super::config::{PriorMean, Scenario, ScenarioConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    #[serde(flatten)]
    pub estimator: EstimatorDiagnostics,
    /// Largest `|θ^{i,j} + θ^{j,i}|` component at the end of the run.
    pub antisymmetry_residual: f64,
}

/// Outcome of one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub steps: usize,
    pub record_every: usize,
    /// Directed edges `(r, j)` in error order.
    pub edges: Vec<(usize, usize)>,
    pub free_dim: usize,
    /// `θ* − θ` after the update of each recorded step, laid out as
    /// `[recorded step][edge][free component]`.
    pub errors: Vec<f64>,
    /// Steps at which `errors` was recorded.
    pub recorded_steps: Vec<usize>,
    /// `Σ_edges ‖θ* − θ‖²` after every step.
    pub sq_error: Vec<f64>,
    /// `Σ_edges ‖θ* − θ_0‖²`.
    pub initial_sq_error: f64,
    /// Position error `|μ_n − x_n|` per step and node, `[step][node]`.
    pub tracking: Vec<f64>,
    pub nodes: usize,
    pub final_params: LocalizationParams,
    pub diagnostics: RunDiagnostics,
}

impl RunResult {
    /// Error vector of edge `edge` at recorded row `row`.
    pub fn error(&self, row: usize, edge: usize) -> &[f64] {
        let at = (row * self.edges.len() + edge) * self.free_dim;
        &self.errors[at..at + self.free_dim]
    }

    /// Mean tracking error over every node and step.
    pub fn mean_tracking_error(&self) -> f64 {
        self.tracking.iter().sum::<f64>() / self.tracking.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResults {
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
}

impl Scenario {
    /// Per-node priors in each node's own frame.
    pub fn priors(&self) -> Result<Vec<NodeFilterState>> {
        let cfg = &self.config;
        self.positions
            .iter()
            .map(|p| {
                let mean = match cfg.prior.mean {
                    PriorMean::Zero => DVector::zeros(self.net.state_dim()),
                    PriorMean::PositionFix => {
                        let local = local_state(&self.initial_state, &self.mask, p);
                        self.mask.embed(&self.mask.project(&local))
                    }
                    PriorMean::InitialState => local_state(&self.initial_state, &self.mask, p),
                };
                NodeFilterState::prior(mean, cfg.prior.kappa)
            })
            .collect()
    }

    /// Trajectory `x_1..x_steps` of replicate `run` and every node's
    /// observations of it, `observations[step][node]`.
    pub fn simulate(&self, run: usize, steps: usize) -> Result<Simulated> {
        let seed = self.config.seed;
        let run_id = run as u64;
        let mut traj_rng = rng::stream(seed, run_id, Purpose::Trajectory);
        let trajectory = simulate_target_with(&self.net.motion, steps, &self.initial_state, &mut traj_rng)?;
        let mut obs_rngs: Vec<_> = (0..self.net.node_count())
            .map(|v| rng::stream(seed, run_id, Purpose::Observation(v)))
            .collect();
        let observations = trajectory
            .iter()
            .enumerate()
            .map(|(k, x)| {
                observe_network(&self.net.sensors, x, &self.mask, &self.positions, &mut obs_rngs)
                    .map_err(|e| e.at_step(k + 1))
            })
            .collect::<Result<_>>()?;
        Ok(Simulated {
            trajectory,
            observations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub trajectory: Vec<DVector<f64>>,
    pub observations: Vec<Vec<DVector<f64>>>,
}

fn sq_error(truth: &LocalizationParams, params: &LocalizationParams, edges: &[(usize, usize)]) -> f64 {
    edges
        .iter()
        .map(|&(r, j)| (truth.free(r, j) - params.free(r, j)).norm_squared())
        .sum()
}

/// Runs Monte Carlo replicate `run` of `scenario`.
pub fn run_single(scenario: &Scenario, run: usize) -> Result<RunResult> {
    let cfg = &scenario.config;
    let net = &scenario.net;
    let topo = &net.topology;
    let mask = &scenario.mask;
    let edges = topo.directed_edges().to_vec();
    let nodes = topo.node_count();
    let free_dim = mask.free_dim();
    let sim = scenario.simulate(run, cfg.steps)?;

    let mut filter = DistributedFilter::new(scenario.priors()?);
    let mut estimator = OnlineEstimator::new(&cfg.estimator, topo, mask);
    let mut params = scenario.initial_offsets();
    let initial_sq_error = sq_error(&scenario.truth, &params, &edges);

    let recorded = cfg.steps / cfg.record_every;
    let mut errors = Vec::with_capacity(recorded * edges.len() * free_dim);
    let mut recorded_steps = Vec::with_capacity(recorded);
    let mut sq = Vec::with_capacity(cfg.steps);
    let mut tracking = Vec::with_capacity(cfg.steps * nodes);

    for (k, (x, ys)) in sim.trajectory.iter().zip(&sim.observations).enumerate() {
        let n = k + 1;
        let record = filter.step(net, ys, &params)?;
        estimator.update(n, net, &filter, &record, &mut params)?;

        sq.push(sq_error(&scenario.truth, &params, &edges));
        for (state, p) in filter.states.iter().zip(&scenario.positions) {
            let local = local_state(x, mask, p);
            tracking.push((mask.project(&state.mean) - mask.project(&local)).norm());
        }
        if n % cfg.record_every == 0 {
            recorded_steps.push(n);
            for &(r, j) in &edges {
                errors.extend((scenario.truth.free(r, j) - params.free(r, j)).iter());
            }
        }
    }

    Ok(RunResult {
        run,
        steps: cfg.steps,
        record_every: cfg.record_every,
        edges,
        free_dim,
        errors,
        recorded_steps,
        sq_error: sq,
        initial_sq_error,
        tracking,
        nodes,
        diagnostics: RunDiagnostics {
            estimator: estimator.diagnostics.clone(),
            antisymmetry_residual: params.antisymmetry_residual(),
        },
        final_params: params,
    })
}

/// Runs every replicate of a built scenario, in parallel across runs.
pub fn run_built(scenario: Scenario) -> Result<ScenarioResults> {
    let runs = (0..scenario.config.runs)
        .into_par_iter()
        .map(|run| run_single(&scenario, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResults { scenario, runs })
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResults> {
    run_built(config.build()?)
}
