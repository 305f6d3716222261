//! Online expectation maximization with running-average statistics per edge.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::NodeFilterState;
use crate::linalg::{spd_inverse, symmetrize};
use crate::messaging::MessageTriple;
use crate::model::TransitionLinearization;
use crate::network::FreeMask;

/// Which term restores the edge's own contribution in the third statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfTermCorrection {
    /// `m_K θ^{r,j}` with the current estimate: the stationary point of the
    /// expected complete-data log-likelihood in `θ^{r,j}`.
    #[default]
    CurrentEstimate,
    /// The first-round offset term `m̈_1` sent by `j`. Coincides with the
    /// default when `j` is a leaf.
    FirstRound,
}

/// Running statistics of edge `(r, j)`. `S1 = H μ_n + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmEdgeState {
    pub h_mat: DMatrix<f64>,
    pub h_vec: DVector<f64>,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
    pub s3: DVector<f64>,
}

impl EmEdgeState {
    pub fn zeros(state_dim: usize) -> Self {
        EmEdgeState {
            h_mat: DMatrix::zeros(state_dim, state_dim),
            h_vec: DVector::zeros(state_dim),
            s1: DVector::zeros(state_dim),
            s2: DMatrix::zeros(state_dim, state_dim),
            s3: DVector::zeros(state_dim),
        }
    }
}

/// Covariance of `x_{n-1}` given `Y_{1:n-1}` and `x_n`:
/// `(Σ_{n-1}⁻¹ + Aᵀ Q⁻¹ A)⁻¹`. Needs an invertible `Q`.
pub fn em_sigma_tilde(prev_cov: &DMatrix<f64>, transition: &DMatrix<f64>, process_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let prev_precision = spd_inverse(prev_cov, "filtered covariance")?;
    let q_inv = spd_inverse(process_cov, "process covariance")?;
    let mut m = prev_precision + transition.transpose() * q_inv * transition;
    symmetrize(&mut m);
    spd_inverse(&m, "backward precision")
}

/// Backward gain `J = Σ_{n-1} Aᵀ P_n⁻¹` with `P_n` the predicted covariance,
/// so that `E[x_{n-1} | Y_{1:n-1}, x_n] = μ_{n-1} + J (x_n - A μ_{n-1} - b)`.
/// Equal to `Σ̃ Aᵀ Q⁻¹` when `Q` is invertible, and defined when it is not.
pub fn backward_gain(prev_cov: &DMatrix<f64>, transition: &DMatrix<f64>, pred_precision: &DMatrix<f64>) -> DMatrix<f64> {
    prev_cov * transition.transpose() * pred_precision
}

/// Inputs of one statistics update for edge `(r, j)`.
pub struct EmStepInput<'a> {
    /// Node `r`'s filtered state at the previous step.
    pub previous: &'a NodeFilterState,
    /// Node `r`'s state after the current update.
    pub current: &'a NodeFilterState,
    pub transition: &'a TransitionLinearization,
    /// Last-round message from `j` to `r`.
    pub last: &'a MessageTriple,
    /// First-round message from `j` to `r`.
    pub first: &'a MessageTriple,
    /// Current estimate of `θ^{r,j}` (full state layout).
    pub theta: &'a DVector<f64>,
}

pub fn em_stats_step(state: &mut EmEdgeState, input: &EmStepInput<'_>, gamma: f64, correction: SelfTermCorrection) {
    let prev = input.previous;
    let a = &input.transition.matrix;
    let j = backward_gain(&prev.cov, a, &input.current.pred_precision);
    let keep = 1.0 - gamma;

    let back_mean = &prev.mean - &j * (a * &prev.mean + &input.transition.offset);
    let h_vec = (&state.h_mat * back_mean + &state.h_vec) * keep;
    let h_mat = &input.last.m * gamma + &state.h_mat * &j * keep;
    state.s1 = &h_mat * &input.current.mean + &h_vec;
    state.h_mat = h_mat;
    state.h_vec = h_vec;

    state.s2 = &input.last.m * gamma + &state.s2 * keep;
    symmetrize(&mut state.s2);

    let self_term = match correction {
        SelfTermCorrection::CurrentEstimate => &input.last.m * input.theta,
        SelfTermCorrection::FirstRound => input.first.mddot.clone(),
    };
    state.s3 = (&input.last.mdot - &input.last.mddot + self_term) * gamma + &state.s3 * keep;
}

/// Maximization step `(Eᵀ S2 E)⁻¹ Eᵀ (S3 − S1)` on the free components.
/// `None` when the reduced system is not positive definite.
pub fn em_mstep(s1: &DVector<f64>, s2: &DMatrix<f64>, s3: &DVector<f64>, mask: &FreeMask) -> Option<DVector<f64>> {
    let lhs = mask.project_matrix(s2);
    let rhs = mask.project(&(s3 - s1));
    let chol = lhs.cholesky()?;
    let sol = chol.solve(&rhs);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Whether the maximization step applies at step `n`.
pub fn burn_in_gate(n: usize, burn_in: usize) -> bool {
    n > burn_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn sigma_tilde_examples() {
        let q = DMatrix::identity(2, 2);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = em_sigma_tilde(&s, &DMatrix::zeros(2, 2), &q).unwrap();
        assert!(max_abs_diff(&t, &s) < 1e-14);
        let t = em_sigma_tilde(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2), &q).unwrap();
        assert!(max_abs_diff(&t, &(DMatrix::identity(2, 2) * 0.5)) < 1e-15);
        assert!(em_sigma_tilde(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn backward_gain_matches_information_form() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.0, 0.9, 0.2, 0.3, 0.0, 1.1]);
        let q = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.05, 0.0, 0.05, 0.3]);
        let pred = &a * &s * a.transpose() + &q;
        let j = backward_gain(&s, &a, &pred.clone().try_inverse().unwrap());
        let tilde = em_sigma_tilde(&s, &a, &q).unwrap();
        let q_inv = q.try_inverse().unwrap();
        assert!(max_abs_diff(&j, &(&tilde * a.transpose() * q_inv)) < 1e-12);
        let s_inv = s.clone().try_inverse().unwrap();
        assert!(max_abs_diff(&(&tilde * s_inv), &(DMatrix::identity(3, 3) - &j * &a)) < 1e-12);
    }

    fn msg(m: DMatrix<f64>) -> MessageTriple {
        MessageTriple {
            mdot: DVector::zeros(m.nrows()),
            mddot: DVector::zeros(m.nrows()),
            m,
        }
    }

    #[test]
    fn first_step_collapse() {
        let d = 2;
        let prev = NodeFilterState::prior(DVector::from_vec(vec![0.4, -0.2]), 2.0).unwrap();
        let mut cur = NodeFilterState::prior(DVector::from_vec(vec![1.0, 3.0]), 1.0).unwrap();
        cur.pred_precision = DMatrix::identity(d, d) * 0.3;
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lin = TransitionLinearization {
            matrix: DMatrix::identity(d, d),
            offset: DVector::zeros(d),
        };
        let message = msg(m.clone());
        let theta = DVector::zeros(d);
        let mut st = EmEdgeState::zeros(d);
        let input = EmStepInput {
            previous: &prev,
            current: &cur,
            transition: &lin,
            last: &message,
            first: &message,
            theta: &theta,
        };
        em_stats_step(&mut st, &input, 1.0, SelfTermCorrection::CurrentEstimate);
        assert_eq!(st.s2, m);
        assert!((&st.s1 - &m * &cur.mean).amax() < 1e-15);
    }

    #[test]
    fn harmonic_steps_average() {
        let d = 1;
        let prev = NodeFilterState::prior(DVector::zeros(d), 1.0).unwrap();
        let cur = prev.clone();
        let lin = TransitionLinearization {
            matrix: DMatrix::identity(d, d),
            offset: DVector::zeros(d),
        };
        let theta = DVector::zeros(d);
        let mut st = EmEdgeState::zeros(d);
        let values = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        for (n, v) in values.iter().enumerate() {
            let message = msg(DMatrix::from_element(1, 1, *v));
            let input = EmStepInput {
                previous: &prev,
                current: &cur,
                transition: &lin,
                last: &message,
                first: &message,
                theta: &theta,
            };
            em_stats_step(&mut st, &input, 1.0 / (n + 1) as f64, SelfTermCorrection::CurrentEstimate);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((st.s2[(0, 0)] - mean).abs() < 1e-14);
    }

    #[test]
    fn mstep_examples() {
        let mask = FreeMask::planar();
        let v = DVector::from_vec(vec![1.5, 7.0, -2.0, 3.0]);
        let theta = em_mstep(&DVector::zeros(4), &DMatrix::identity(4, 4), &v, &mask).unwrap();
        assert_eq!(theta.as_slice(), &[1.5, -2.0]);
        // Only the velocity block is informative: the position subsystem is singular.
        let mut s2 = DMatrix::zeros(4, 4);
        s2[(1, 1)] = 1.0;
        s2[(3, 3)] = 1.0;
        assert!(em_mstep(&DVector::zeros(4), &s2, &v, &mask).is_none());
    }

    #[test]
    fn burn_in() {
        assert!(burn_in_gate(1, 0));
        assert!(!burn_in_gate(500, 500));
        assert!(burn_in_gate(501, 500));
    }
}
