//! Randomized comparisons of the recursive algorithms against the slow
//! references in [`crate::oracle`]. Each check returns the worst deviation
//! it saw next to the limit it was held to.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimation::{
    batch_loglik, offline_em_iteration, sequential_em_iteration, EstimatorConfig, OfflineScheme, OnlineEstimator,
    SelfTermCorrection, StepSchedule,
};
use crate::filter::{CentralizedFilter, DistributedFilter, FilterMode, NetworkModel, NodeFilterState};
use crate::linalg::{max_abs_diff, max_abs_diff_vec};
use crate::messaging::{aggregate, init_messages, run_rounds, LocalTerm};
use crate::model::{build_cv_model, simulate_target_with, ObservationModel};
use crate::network::{offsets_from, truth_from_positions, FreeMask, LocalizationParams, Topology};
use crate::oracle::{
    direct_sums, joint_posterior, random_spd, random_tree, random_vector, running_average_weight, truncated,
    JointProblem,
};
use crate::rng::{self, Purpose};
use crate::sim::observe_network;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckReport {
    fn below(name: &str, measured: f64, limit: f64, detail: String) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: measured < limit,
            measured,
            limit,
            detail,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {:.3e} (limit {:.1e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.limit,
            self.detail
        )
    }
}

/// A random linear network problem with ground-truth offsets.
#[derive(Debug, Clone)]
pub struct RandomProblem {
    pub net: NetworkModel,
    pub positions: Vec<DVector<f64>>,
    pub truth: LocalizationParams,
    pub prior_mean: DVector<f64>,
    pub kappa: f64,
}

impl RandomProblem {
    /// Priors consistent across frames: node `v` gets node `reference`'s
    /// prior shifted by `θ^{reference,v}`.
    pub fn priors(&self, params: &LocalizationParams, reference: usize) -> Result<Vec<NodeFilterState>> {
        let offsets = offsets_from(&self.net.topology, params, reference)?;
        offsets
            .into_iter()
            .map(|o| NodeFilterState::prior(&self.prior_mean + o, self.kappa))
            .collect()
    }

    /// `observations[step][node]` for `steps` steps of a simulated target.
    pub fn simulate(&self, steps: usize, seed: u64, run: u64) -> Result<Vec<Vec<DVector<f64>>>> {
        let mask = self.truth.mask();
        let mut traj_rng = rng::stream(seed, run, Purpose::Trajectory);
        let x0 = DVector::from_vec(vec![0.0, 1.0, 0.0, -0.5]);
        let traj = simulate_target_with(&self.net.motion, steps, &x0, &mut traj_rng)?;
        let mut rngs: Vec<ChaCha8Rng> = (0..self.net.node_count())
            .map(|v| rng::stream(seed, run, Purpose::Observation(v)))
            .collect();
        traj.iter()
            .map(|x| observe_network(&self.net.sensors, x, mask, &self.positions, &mut rngs))
            .collect()
    }
}

pub fn random_linear_sensor<R: Rng + ?Sized>(rng: &mut R, state_dim: usize, dim: usize) -> ObservationModel {
    ObservationModel::Linear {
        matrix: DMatrix::from_fn(dim, state_dim, |_, _| rng.random_range(-1.5..1.5)),
        offset: random_vector(rng, dim, 0.3),
        noise_cov: random_spd(rng, dim, 0.2) * 0.3,
    }
}

/// Random tree with `2..=max_nodes` nodes, constant-velocity motion and
/// generic two-dimensional linear sensors.
pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, max_nodes: usize) -> Result<RandomProblem> {
    let n = rng.random_range(2..=max_nodes.max(2));
    let topology = random_tree(rng, n);
    let motion = build_cv_model(rng.random_range(0.05..0.5), rng.random_range(0.3..2.0))?;
    let sensors = (0..n).map(|_| random_linear_sensor(rng, 4, 2)).collect();
    let rounds = topology.diameter().max(1);
    let positions: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0)))
        .collect();
    let truth = truth_from_positions(&topology, FreeMask::planar(), &positions)?;
    let net = NetworkModel::new(topology, motion, sensors, rounds, FilterMode::Linear)?;
    Ok(RandomProblem {
        net,
        positions,
        truth,
        prior_mean: random_vector(rng, 4, 1.0),
        kappa: rng.random_range(1.0..100.0),
    })
}

/// Parameters with independent random values on every directed edge.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, topology: &Topology, scale: f64) -> LocalizationParams {
    let mut p = LocalizationParams::zeros(topology, FreeMask::planar());
    for &(i, j) in topology.directed_edges() {
        p.set_free(i, j, &random_vector(rng, 2, scale));
    }
    p
}

/// Message aggregation on random trees against direct summation.
pub fn check_aggregation(instances: usize, max_nodes: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = rng::stream(seed, 0, Purpose::Other(1));
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=max_nodes);
        let topo = random_tree(&mut rng, n);
        let locals: Vec<LocalTerm> = (0..n)
            .map(|_| LocalTerm {
                info: random_spd(&mut rng, 4, 0.1),
                info_vec: random_vector(&mut rng, 4, 1.0),
            })
            .collect();
        let params = random_params(&mut rng, &topo, 5.0);
        let rounds = topo.diameter().max(1);
        let board = init_messages(&topo, &locals, &params)?;
        let board = run_rounds(board, rounds, &topo, &locals, &params)?;
        for r in 0..n {
            let got = aggregate(&board, &topo, r, &locals)?;
            let want = direct_sums(&topo, &locals, &params, r)?;
            worst = worst
                .max(max_abs_diff(&got.info, &want.info))
                .max(max_abs_diff_vec(&got.info_vec, &want.info_vec))
                .max(max_abs_diff_vec(&got.info_offset, &want.info_offset));
        }
    }
    Ok(CheckReport::below(
        "aggregation equals direct sums",
        worst,
        1e-12,
        format!("{instances} random trees, up to {max_nodes} nodes"),
    ))
}

/// Every node's filter against the stacked centralized filter.
pub fn check_filter_equivalence(instances: usize, steps: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = rng::stream(seed, 0, Purpose::Other(2));
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let p = random_problem(&mut rng, 8)?;
        let ys = p.simulate(steps, seed, k as u64)?;
        let offsets = offsets_from(&p.net.topology, &p.truth, 0)?;
        let priors = p.priors(&p.truth, 0)?;
        let mut dist = DistributedFilter::new(priors.clone());
        let mut cent = CentralizedFilter::new(0, priors[0].clone());
        for y in &ys {
            dist.step(&p.net, y, &p.truth)?;
            cent.step(&p.net.motion, &p.net.sensors, y, &offsets)?;
            for (r, s) in dist.states.iter().enumerate() {
                worst = worst
                    .max(max_abs_diff_vec(&s.mean, &(&cent.state.mean + &offsets[r])))
                    .max(max_abs_diff(&s.cov, &cent.state.cov));
            }
        }
    }
    Ok(CheckReport::below(
        "distributed filter equals centralized filter",
        worst,
        1e-8,
        format!("{instances} random trees, {steps} steps"),
    ))
}

fn centralized_increment(
    p: &RandomProblem,
    ys: &[Vec<DVector<f64>>],
    params: &LocalizationParams,
    reference: usize,
) -> Result<f64> {
    let offsets = offsets_from(&p.net.topology, params, reference)?;
    let prior = NodeFilterState::prior(p.prior_mean.clone(), p.kappa)?;
    let mut f = CentralizedFilter::new(reference, prior);
    let mut last = 0.0;
    for y in ys {
        last = f.step(&p.net.motion, &p.net.sensors, y, &offsets)?;
    }
    Ok(last)
}

/// Gradient of the one-step predictive log-likelihood against central differences.
pub fn check_rml_gradient(configs: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = rng::stream(seed, 0, Purpose::Other(3));
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for k in 0..configs {
        let p = random_problem(&mut rng, 6)?;
        let topo = &p.net.topology;
        let steps = rng.random_range(1..=15);
        let ys = p.simulate(steps, seed, k as u64)?;
        let params = random_params(&mut rng, topo, 5.0);
        let edge = rng.random_range(0..topo.directed_count());
        let (r, j) = topo.directed_edges()[edge];

        let mask = FreeMask::planar();
        let priors: Vec<NodeFilterState> = (0..topo.node_count())
            .map(|_| NodeFilterState::prior(p.prior_mean.clone(), p.kappa))
            .collect::<Result<_>>()?;
        let mut filter = DistributedFilter::new(priors);
        let mut est = OnlineEstimator::new(
            &EstimatorConfig::Rml {
                schedule: StepSchedule::constant(0.0),
            },
            topo,
            &mask,
        );
        let mut fixed = params.clone();
        let mut grad = DVector::zeros(2);
        for (n, y) in ys.iter().enumerate() {
            let record = filter.step(&p.net, y, &fixed)?;
            let mut edge_state = est.rml_edges().unwrap()[edge].clone();
            let incoming = record.board.message(topo, j, r).unwrap();
            grad = crate::estimation::rml_gradient(
                &mut edge_state,
                &record.transitions[r].matrix,
                &filter.states[r],
                incoming,
                &mask,
            );
            est.update(n + 1, &p.net, &filter, &record, &mut fixed)?;
        }

        let mut fd = DVector::zeros(2);
        for c in 0..2 {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut v = params.free(r, j);
            v[c] += h;
            plus.set_free(r, j, &v);
            v[c] -= 2.0 * h;
            minus.set_free(r, j, &v);
            fd[c] = (centralized_increment(&p, &ys, &plus, r)? - centralized_increment(&p, &ys, &minus, r)?) / (2.0 * h);
        }
        let rel = (&grad - &fd).norm() / fd.norm().max(1e-12);
        worst = worst.max(rel);
    }
    Ok(CheckReport::below(
        "gradient matches finite differences",
        worst,
        1e-4,
        format!("{configs} random configurations, h = {h:e}"),
    ))
}

/// The first running statistic against dense conditioning over the whole
/// horizon, with the parameter sequence the online estimator produced.
pub fn check_em_statistic(instances: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = rng::stream(seed, 0, Purpose::Other(4));
    let mut worst = 0.0_f64;
    for k in 0..instances {
        let p = random_problem(&mut rng, 5)?;
        let topo = &p.net.topology;
        let horizon = rng.random_range(5..=20);
        let ys = p.simulate(horizon, seed, k as u64)?;
        let mask = FreeMask::planar();
        let schedule = StepSchedule::new(rng.random_range(0.05..0.9), rng.random_range(0..10), 0.8)?;
        let config = EstimatorConfig::Em {
            schedule,
            burn_in: rng.random_range(0..5),
            correction: SelfTermCorrection::CurrentEstimate,
        };
        let mut params = random_params(&mut rng, topo, 3.0);
        let priors: Vec<NodeFilterState> = (0..topo.node_count())
            .map(|_| NodeFilterState::prior(p.prior_mean.clone(), p.kappa))
            .collect::<Result<_>>()?;
        let mut filter = DistributedFilter::new(priors);
        let mut est = OnlineEstimator::new(&config, topo, &mask);

        let mut used: Vec<LocalizationParams> = Vec::new();
        let mut boards = Vec::new();
        let mut stats: Vec<Vec<DVector<f64>>> = Vec::new();
        for (n, y) in ys.iter().enumerate() {
            used.push(params.clone());
            let record = filter.step(&p.net, y, &params)?;
            est.update(n + 1, &p.net, &filter, &record, &mut params)?;
            boards.push(record.board);
            stats.push(est.em_edges().unwrap().iter().map(|e| e.s1.clone()).collect());
        }
        let gammas: Vec<f64> = (1..=horizon).map(|n| schedule.step_size(n)).collect();

        for (edge, &(r, j)) in topo.directed_edges().iter().enumerate() {
            let back = topo.edge_index(j, r).unwrap();
            let offsets: Vec<Vec<DVector<f64>>> = used
                .iter()
                .map(|prm| offsets_from(topo, prm, r))
                .collect::<Result<_>>()?;
            let problem = JointProblem {
                motion: p.net.motion.clone(),
                prior_mean: p.prior_mean.clone(),
                prior_cov: DMatrix::identity(4, 4) * p.kappa,
                sensors: p.net.sensors.clone(),
                offsets,
                observations: ys.clone(),
            };
            for n in 1..=horizon {
                let post = joint_posterior(&truncated(&problem, n))?;
                let mut want = DVector::zeros(4);
                for m in 1..=n {
                    let w = running_average_weight(&gammas, m, n);
                    want += boards[m - 1].current(back).m.clone() * &post.means[m - 1] * w;
                }
                let got = &stats[n - 1][edge];
                worst = worst.max((got - &want).norm() / want.norm().max(1e-12));
            }
        }
    }
    Ok(CheckReport::below(
        "running statistic matches dense smoothing",
        worst,
        1e-8,
        format!("{instances} random trees, horizons up to 20"),
    ))
}

/// Outcome of a batch EM run.
#[derive(Debug, Clone)]
pub struct OfflineEmTrace {
    pub logliks: Vec<f64>,
    /// Largest decrease between consecutive iterations (zero when monotone).
    pub worst_drop: f64,
    pub final_rmse: f64,
    pub final_max_abs: f64,
    /// Largest per-edge distance `‖θ* − θ‖` after the last iteration.
    pub final_max_distance: f64,
    pub skipped: usize,
    pub params: LocalizationParams,
}

/// Runs `iterations` batch EM iterations from `start` and tracks the
/// likelihood in `reference`'s frame and the distance to `truth`.
#[allow(clippy::too_many_arguments)]
pub fn offline_em_trace(
    net: &NetworkModel,
    priors: &[NodeFilterState],
    observations: &[Vec<DVector<f64>>],
    start: &LocalizationParams,
    truth: &LocalizationParams,
    iterations: usize,
    scheme: OfflineScheme,
    correction: SelfTermCorrection,
    reference: usize,
) -> Result<OfflineEmTrace> {
    let mut params = start.clone();
    let mut logliks = vec![batch_loglik(net, &priors[reference], observations, &params, reference)?];
    let mut skipped = 0;
    for _ in 0..iterations {
        let out = match scheme {
            OfflineScheme::Parallel => offline_em_iteration(net, priors, observations, &params, correction)?,
            OfflineScheme::Sequential => {
                sequential_em_iteration(net, &priors[reference], observations, &params, reference, correction)?
            }
        };
        skipped += out.skipped;
        params = out.params;
        logliks.push(batch_loglik(net, &priors[reference], observations, &params, reference)?);
    }
    let worst_drop = logliks.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let edges = net.topology.directed_edges();
    let sq: f64 = edges
        .iter()
        .map(|&(r, j)| (truth.free(r, j) - params.free(r, j)).norm_squared())
        .sum();
    let max_abs = edges
        .iter()
        .map(|&(r, j)| (truth.free(r, j) - params.free(r, j)).amax())
        .fold(0.0, f64::max);
    let max_distance = edges
        .iter()
        .map(|&(r, j)| (truth.free(r, j) - params.free(r, j)).norm())
        .fold(0.0, f64::max);
    Ok(OfflineEmTrace {
        logliks,
        worst_drop,
        final_rmse: (sq / edges.len() as f64).sqrt(),
        final_max_abs: max_abs,
        final_max_distance: max_distance,
        skipped,
        params,
    })
}

/// Oracle suites used by `distloc verify`, at reduced sizes.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_aggregation(100, 8, seed)?,
        check_filter_equivalence(20, 100, seed)?,
        check_rml_gradient(50, seed)?,
        check_em_statistic(5, seed)?,
    ])
}
