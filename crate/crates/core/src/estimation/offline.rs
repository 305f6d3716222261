//! Batch EM over a stored observation record. Each iteration runs the
//! distributed filter with the parameters frozen, smooths every node's
//! track, and solves the per-edge normal equations.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{rts_smooth, CentralizedFilter, DistributedFilter, NetworkModel, NodeFilterState, Smoothed};
use crate::messaging::{init_messages, run_rounds, LocalTerm, MessageBoard};
use crate::model::ObservationModel;
use crate::network::{offsets_from, LocalizationParams};

use super::em::{em_mstep, SelfTermCorrection};

/// Stored forward pass: per-node histories and per-step message boards.
#[derive(Debug, Clone)]
pub struct BatchPass {
    /// `histories[r][n]` is node `r`'s state after step `n + 1`.
    pub histories: Vec<Vec<NodeFilterState>>,
    /// `transitions[r][n]` produced the prediction in `histories[r][n]`.
    pub transitions: Vec<Vec<DMatrix<f64>>>,
    pub boards: Vec<MessageBoard>,
}

/// Runs the distributed filter over `observations[step][node]` with fixed parameters.
pub fn filter_batch(
    net: &NetworkModel,
    priors: &[NodeFilterState],
    observations: &[Vec<DVector<f64>>],
    params: &LocalizationParams,
) -> Result<BatchPass> {
    let n = net.node_count();
    let mut filter = DistributedFilter::new(priors.to_vec());
    let mut histories = vec![Vec::with_capacity(observations.len()); n];
    let mut transitions = vec![Vec::with_capacity(observations.len()); n];
    let mut boards = Vec::with_capacity(observations.len());
    for ys in observations {
        let record = filter.step(net, ys, params)?;
        for r in 0..n {
            histories[r].push(filter.states[r].clone());
            transitions[r].push(record.transitions[r].matrix.clone());
        }
        boards.push(record.board);
    }
    Ok(BatchPass {
        histories,
        transitions,
        boards,
    })
}

#[derive(Debug, Clone)]
pub struct OfflineEmOutcome {
    pub params: LocalizationParams,
    /// Edges whose normal equations were singular and kept their value.
    pub skipped: usize,
}

/// Batch statistics of edge `(r, j)`: `Σ m_K`, `Σ m_K μ_{n|T}` and
/// `Σ (ṁ_K − m̈_K + correction)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEdgeStats {
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
    pub s3: DVector<f64>,
}

pub fn batch_edge_stats(
    net: &NetworkModel,
    pass: &BatchPass,
    smoothed: &[Smoothed],
    params: &LocalizationParams,
    r: usize,
    j: usize,
    correction: SelfTermCorrection,
) -> BatchEdgeStats {
    let d = net.state_dim();
    let idx = net.topology.edge_index(j, r).expect("edge exists");
    let theta = params.get(r, j);
    let mut s1 = DVector::zeros(d);
    let mut s2 = DMatrix::zeros(d, d);
    let mut s3 = DVector::zeros(d);
    for (board, sm) in pass.boards.iter().zip(smoothed) {
        let msg = board.current(idx);
        s1 += &msg.m * &sm.mean;
        s2 += &msg.m;
        let self_term = match correction {
            SelfTermCorrection::CurrentEstimate => &msg.m * &theta,
            SelfTermCorrection::FirstRound => board.first(idx).mddot.clone(),
        };
        s3 += &msg.mdot - &msg.mddot + self_term;
    }
    BatchEdgeStats { s1, s2, s3 }
}

/// One batch EM iteration, all edges updated from the same frozen parameters.
pub fn offline_em_iteration(
    net: &NetworkModel,
    priors: &[NodeFilterState],
    observations: &[Vec<DVector<f64>>],
    params: &LocalizationParams,
    correction: SelfTermCorrection,
) -> Result<OfflineEmOutcome> {
    let pass = filter_batch(net, priors, observations, params)?;
    let smoothed: Vec<Vec<Smoothed>> = (0..net.node_count())
        .map(|r| rts_smooth(&pass.histories[r], &pass.transitions[r]))
        .collect();
    let mut next = params.clone();
    let mut skipped = 0;
    for &(r, j) in net.topology.directed_edges() {
        let stats = batch_edge_stats(net, &pass, &smoothed[r], params, r, j, correction);
        match em_mstep(&stats.s1, &stats.s2, &stats.s3, params.mask()) {
            Some(free) => next.set_free(r, j, &free),
            None => skipped += 1,
        }
    }
    Ok(OfflineEmOutcome { params: next, skipped })
}

/// How the per-edge maximization steps of one batch iteration are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflineScheme {
    /// Every controlling node solves for its edges at once from the same
    /// parameters, each with its own smoother ([`offline_em_iteration`]).
    #[default]
    Parallel,
    /// Edges are solved one after another ([`sequential_em_iteration`]).
    Sequential,
}

/// Batch EM iteration in which edges pointing away from `reference` are
/// solved one at a time, outward from the reference, each against the
/// latest values of the others. The reverse edge is set to the negative.
///
/// The E-step is the reference node's stacked smoother. Each solve is the
/// per-edge maximization equation with messages rebuilt from the current
/// parameters, so with the right self-term every solve maximizes the
/// expected complete-data log-likelihood in that edge and the batch
/// likelihood cannot decrease. Trees only.
pub fn sequential_em_iteration(
    net: &NetworkModel,
    prior: &NodeFilterState,
    observations: &[Vec<DVector<f64>>],
    params: &LocalizationParams,
    reference: usize,
    correction: SelfTermCorrection,
) -> Result<OfflineEmOutcome> {
    let topo = &net.topology;
    if !topo.is_tree() {
        return Err(Error::Unsupported("sequential batch EM needs a tree"));
    }
    let offsets = offsets_from(topo, params, reference)?;
    let mut central = CentralizedFilter::new(reference, prior.clone());
    for ys in observations {
        central.step(&net.motion, &net.sensors, ys, &offsets)?;
    }
    let transitions = vec![net.motion.transition.clone(); observations.len()];
    let smoothed = rts_smooth(&central.history, &transitions);

    let locals: Vec<Vec<LocalTerm>> = observations
        .iter()
        .map(|ys| {
            net.sensors
                .iter()
                .zip(&net.noise_precisions)
                .zip(ys)
                .map(|((sensor, rinv), y)| match sensor {
                    ObservationModel::Linear { matrix, offset, .. } => Ok(LocalTerm::from_linear(matrix, rinv, y, offset)),
                    ObservationModel::Bearings { .. } => Err(Error::Unsupported("batch EM needs linear sensors")),
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let depth = topo.distances_from(reference);
    let mut order: Vec<(usize, usize)> = topo
        .directed_edges()
        .iter()
        .copied()
        .filter(|&(r, j)| depth[j] > depth[r])
        .collect();
    order.sort_by_key(|&(r, _)| depth[r]);

    let rounds = topo.diameter().max(1);
    let d = net.state_dim();
    let mut current = params.clone();
    let mut skipped = 0;
    for (r, j) in order {
        let idx = topo.edge_index(j, r).expect("edge exists");
        let shift = offsets_from(topo, &current, reference)?[r].clone();
        let theta = current.get(r, j);
        let mut s1 = DVector::zeros(d);
        let mut s2 = DMatrix::zeros(d, d);
        let mut s3 = DVector::zeros(d);
        for (local, sm) in locals.iter().zip(&smoothed) {
            let board = run_rounds(init_messages(topo, local, &current)?, rounds, topo, local, &current)?;
            let msg = board.current(idx);
            s1 += &msg.m * (&sm.mean + &shift);
            s2 += &msg.m;
            let self_term = match correction {
                SelfTermCorrection::CurrentEstimate => &msg.m * &theta,
                SelfTermCorrection::FirstRound => board.first(idx).mddot.clone(),
            };
            s3 += &msg.mdot - &msg.mddot + self_term;
        }
        match em_mstep(&s1, &s2, &s3, current.mask()) {
            Some(free) => {
                current.set_free(r, j, &free);
                current.set_free(j, r, &-free);
            }
            None => skipped += 1,
        }
    }
    Ok(OfflineEmOutcome {
        params: current,
        skipped,
    })
}

/// `log p(Y_{1:T})` of the stacked model in `reference`'s frame, with node
/// offsets accumulated along shortest paths from the reference.
pub fn batch_loglik(
    net: &NetworkModel,
    prior: &NodeFilterState,
    observations: &[Vec<DVector<f64>>],
    params: &LocalizationParams,
    reference: usize,
) -> Result<f64> {
    let offsets = offsets_from(&net.topology, params, reference)?;
    let mut filter = CentralizedFilter::new(reference, prior.clone());
    for ys in observations {
        filter.step(&net.motion, &net.sensors, ys, &offsets)?;
    }
    Ok(filter.loglik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, FreeMask};
    use crate::verify::random_problem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(correction: SelfTermCorrection, seed: u64) -> (Vec<f64>, LocalizationParams, LocalizationParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 5).unwrap();
        let obs = p.simulate(40, seed, 0).unwrap();
        let mut params = LocalizationParams::zeros(&p.net.topology, FreeMask::planar());
        let prior = p.priors(&params, 0).unwrap().swap_remove(0);
        let mut ll = vec![batch_loglik(&p.net, &prior, &obs, &params, 0).unwrap()];
        for _ in 0..15 {
            params = sequential_em_iteration(&p.net, &prior, &obs, &params, 0, correction).unwrap().params;
            ll.push(batch_loglik(&p.net, &prior, &obs, &params, 0).unwrap());
        }
        (ll, params, p.truth)
    }

    #[test]
    fn sequential_iterations_never_lower_the_likelihood() {
        for seed in 0..6 {
            let (ll, params, _) = trace(SelfTermCorrection::CurrentEstimate, seed);
            for w in ll.windows(2) {
                assert!(w[1] >= w[0] - 1e-7 * w[0].abs().max(1.0), "seed {seed}: {} -> {}", w[0], w[1]);
            }
            assert!(params.antisymmetry_residual() < 1e-12);
        }
    }

    #[test]
    fn sequential_iterations_approach_the_truth() {
        for seed in 0..4 {
            let (_, params, truth) = trace(SelfTermCorrection::CurrentEstimate, seed);
            let moved: f64 = truth.iter().map(|(e, t)| (t - params.get(e.0, e.1)).norm_squared()).sum();
            let start: f64 = truth.iter().map(|(_, t)| t.norm_squared()).sum();
            assert!(moved < start, "seed {seed}: {moved} vs {start}");
        }
    }

    #[test]
    fn sequential_scheme_needs_a_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 4).unwrap();
        let cyclic = build_topology(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let net = NetworkModel::new(
            cyclic.clone(),
            p.net.motion.clone(),
            vec![p.net.sensors[0].clone(); 3],
            1,
            crate::filter::FilterMode::Linear,
        )
        .unwrap();
        let params = LocalizationParams::zeros(&cyclic, FreeMask::planar());
        let prior = NodeFilterState::prior(DVector::zeros(4), 1.0).unwrap();
        let obs = vec![vec![DVector::zeros(2); 3]; 2];
        let err = sequential_em_iteration(&net, &prior, &obs, &params, 0, SelfTermCorrection::CurrentEstimate);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn batch_pass_keeps_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_problem(&mut rng, 4).unwrap();
        let obs = p.simulate(7, 2, 0).unwrap();
        let priors = p.priors(&p.truth, 0).unwrap();
        let pass = filter_batch(&p.net, &priors, &obs, &p.truth).unwrap();
        assert_eq!(pass.boards.len(), 7);
        assert!(pass.histories.iter().all(|h| h.len() == 7));
        assert!(pass.transitions.iter().all(|t| t.len() == 7));
    }
}
