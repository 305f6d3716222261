//! Slow reference computations used to check the recursive algorithms:
//! direct sums over the graph, dense joint-Gaussian conditioning over a
//! whole trajectory, and random problem generators.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_log_det, symmetrize};
use crate::messaging::{Aggregate, LocalTerm};
use crate::model::{MotionModel, ObservationModel};
use crate::network::{offsets_from, LocalizationParams, Topology};

/// Uniformly shuffled random-attachment tree on `n` nodes.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Topology {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let edges: Vec<(usize, usize)> = (1..n).map(|k| (order[rng.random_range(0..k)], order[k])).collect();
    Topology::new(n, &edges).expect("random tree is valid")
}

/// `G Gᵀ + floor I` with a standard normal `G`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, floor: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut m = &g * g.transpose() + DMatrix::identity(d, d) * floor;
    symmetrize(&mut m);
    m
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `Σ_v F^v`, `Σ_v Ḟ^v` and `Σ_v F^v θ^{r,v}` summed directly, with
/// `θ^{r,v}` accumulated along the shortest path.
pub fn direct_sums(
    topology: &Topology,
    locals: &[LocalTerm],
    params: &LocalizationParams,
    r: usize,
) -> Result<Aggregate> {
    let offsets = offsets_from(topology, params, r)?;
    let d = locals[r].info_vec.len();
    let mut agg = Aggregate {
        info: DMatrix::zeros(d, d),
        info_vec: DVector::zeros(d),
        info_offset: DVector::zeros(d),
    };
    for (v, term) in locals.iter().enumerate() {
        agg.info += &term.info;
        agg.info_vec += &term.info_vec;
        agg.info_offset += &term.info * &offsets[v];
    }
    Ok(agg)
}

/// `Σ_{v behind j} F^v`, the exact content of the message from `j` to `r` on a tree.
pub fn subtree_information(topology: &Topology, locals: &[LocalTerm], j: usize, r: usize) -> DMatrix<f64> {
    let d = locals[j].info.nrows();
    topology
        .subtree(j, r)
        .into_iter()
        .fold(DMatrix::zeros(d, d), |acc, v| acc + &locals[v].info)
}

/// Linear Gaussian model over a full horizon, every node measuring
/// `C^v (x_n + offsets[n][v]) + d^v + w`.
#[derive(Debug, Clone)]
pub struct JointProblem {
    pub motion: MotionModel,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub sensors: Vec<ObservationModel>,
    /// `offsets[n][v]`, allowed to change with time.
    pub offsets: Vec<Vec<DVector<f64>>>,
    /// `observations[n][v]`.
    pub observations: Vec<Vec<DVector<f64>>>,
}

/// Posterior marginals of `x_1..x_T` given every observation, and `log p(Y_{1:T})`.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

/// Conditions the joint Gaussian of `(x_0..x_T, Y_1..Y_T)` on the observations
/// in covariance form. Works with a singular process covariance.
pub fn joint_posterior(problem: &JointProblem) -> Result<JointPosterior> {
    let m = &problem.motion;
    let d = m.state_dim();
    let t = problem.observations.len();
    let nx = (t + 1) * d;
    let a = &m.transition;

    // Prior mean and covariance of the stacked trajectory.
    let mut mean_x = DVector::zeros(nx);
    let mut marg: Vec<DMatrix<f64>> = Vec::with_capacity(t + 1);
    mean_x.rows_mut(0, d).copy_from(&problem.prior_mean);
    marg.push(problem.prior_cov.clone());
    for n in 1..=t {
        let prev = mean_x.rows((n - 1) * d, d).into_owned();
        mean_x.rows_mut(n * d, d).copy_from(&(a * prev + &m.drift));
        let p = a * &marg[n - 1] * a.transpose() + &m.process_cov;
        marg.push(p);
    }
    let mut cov_x = DMatrix::zeros(nx, nx);
    for k in 0..=t {
        let mut block = marg[k].clone();
        for n in k..=t {
            if n > k {
                block = a * block;
            }
            cov_x.view_mut((n * d, k * d), (d, d)).copy_from(&block);
            cov_x.view_mut((k * d, n * d), (d, d)).copy_from(&block.transpose());
        }
    }

    let per_step: usize = problem.sensors.iter().map(|s| s.dim()).sum();
    let ny = t * per_step;
    let mut h = DMatrix::zeros(ny, nx);
    let mut shift = DVector::zeros(ny);
    let mut y = DVector::zeros(ny);
    let mut r = DMatrix::zeros(ny, ny);
    let mut row = 0;
    for n in 1..=t {
        for (v, sensor) in problem.sensors.iter().enumerate() {
            let ObservationModel::Linear { matrix, offset, noise_cov } = sensor else {
                return Err(Error::Unsupported("joint oracle needs linear sensors"));
            };
            let p = matrix.nrows();
            h.view_mut((row, n * d), (p, d)).copy_from(matrix);
            shift
                .rows_mut(row, p)
                .copy_from(&(matrix * &problem.offsets[n - 1][v] + offset));
            y.rows_mut(row, p).copy_from(&problem.observations[n - 1][v]);
            r.view_mut((row, row), (p, p)).copy_from(noise_cov);
            row += p;
        }
    }

    let mean_y = &h * &mean_x + shift;
    let cross = &cov_x * h.transpose();
    let mut s = &h * &cross + r;
    symmetrize(&mut s);
    let s_inv = spd_inverse(&s, "joint observation covariance")?;
    let resid = &y - &mean_y;
    let post_mean = &mean_x + &cross * (&s_inv * &resid);
    let post_cov = &cov_x - &cross * &s_inv * cross.transpose();
    let loglik = -0.5
        * (resid.dot(&(&s_inv * &resid))
            + spd_log_det(&s, "joint observation covariance")?
            + ny as f64 * (2.0 * std::f64::consts::PI).ln());

    let means = (1..=t).map(|n| post_mean.rows(n * d, d).into_owned()).collect();
    let covs = (1..=t)
        .map(|n| {
            let mut c = post_cov.view((n * d, n * d), (d, d)).into_owned();
            symmetrize(&mut c);
            c
        })
        .collect();
    Ok(JointPosterior { means, covs, loglik })
}

/// The same problem restricted to the first `steps` observations.
pub fn truncated(problem: &JointProblem, steps: usize) -> JointProblem {
    JointProblem {
        offsets: problem.offsets[..steps].to_vec(),
        observations: problem.observations[..steps].to_vec(),
        ..problem.clone()
    }
}

/// Weight of step `m` in the running average at step `n`:
/// `γ_m Π_{i=m+1}^{n} (1 − γ_i)`.
pub fn running_average_weight(gammas: &[f64], m: usize, n: usize) -> f64 {
    let tail: f64 = ((m + 1)..=n).map(|i| 1.0 - gammas[i - 1]).product();
    gammas[m - 1] * tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{CentralizedFilter, NodeFilterState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_trees_are_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..10 {
            let t = random_tree(&mut rng, n);
            assert!(t.is_tree());
            assert_eq!(t.node_count(), n);
        }
    }

    #[test]
    fn joint_loglik_matches_filter_on_one_step() {
        let m = MotionModel::scalar(0.9, 0.5).unwrap();
        let obs = ObservationModel::position(1, &[0], 1.0, 0.7).unwrap();
        let y = DVector::from_element(1, 0.3);
        let problem = JointProblem {
            motion: m.clone(),
            prior_mean: DVector::from_element(1, 0.2),
            prior_cov: DMatrix::from_element(1, 1, 2.0),
            sensors: vec![obs.clone()],
            offsets: vec![vec![DVector::zeros(1)]],
            observations: vec![vec![y.clone()]],
        };
        let post = joint_posterior(&problem).unwrap();
        let prior = NodeFilterState::prior(DVector::from_element(1, 0.2), 2.0).unwrap();
        let mut f = CentralizedFilter::new(0, prior);
        let inc = f.step(&m, &[obs], &[y], &[DVector::zeros(1)]).unwrap();
        assert!((inc - post.loglik).abs() < 1e-12);
        assert!((f.state.mean[0] - post.means[0][0]).abs() < 1e-12);
    }

    #[test]
    fn running_average_weights_sum_to_one_with_unit_start() {
        let gammas = [1.0, 0.5, 0.2, 0.1];
        let total: f64 = (1..=4).map(|m| running_average_weight(&gammas, m, 4)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
