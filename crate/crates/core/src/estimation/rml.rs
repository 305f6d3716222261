//! Recursive maximum likelihood: stochastic gradient ascent on each node's
//! one-step predictive log-likelihood, one tangent filter per edge.

use nalgebra::{DMatrix, DVector};

use crate::filter::NodeFilterState;
use crate::messaging::MessageTriple;
use crate::network::FreeMask;

/// Derivatives of the node's filter with respect to the free components of
/// one edge offset (`state_dim × free_dim` each).
#[derive(Debug, Clone, PartialEq)]
pub struct RmlEdgeState {
    pub mu_dot: DMatrix<f64>,
    pub mu_dot_pred: DMatrix<f64>,
    pub z_dot: DMatrix<f64>,
}

impl RmlEdgeState {
    pub fn zeros(mask: &FreeMask) -> Self {
        let z = DMatrix::zeros(mask.state_dim(), mask.free_dim());
        RmlEdgeState {
            mu_dot: z.clone(),
            mu_dot_pred: z.clone(),
            z_dot: z,
        }
    }
}

/// Propagates the tangent filter of edge `(r, j)` through one step and
/// returns the gradient of `log p(Y_n | Y_{1:n-1})` with respect to the free
/// components of `θ^{r,j}`.
///
/// `node` is node `r`'s state after the update, `transition` the matrix of
/// its prediction and `incoming` the last-round message from `j` to `r`.
pub fn rml_gradient(
    edge: &mut RmlEdgeState,
    transition: &DMatrix<f64>,
    node: &NodeFilterState,
    incoming: &MessageTriple,
    mask: &FreeMask,
) -> DVector<f64> {
    let e = mask.matrix();
    edge.mu_dot_pred = transition * &edge.mu_dot;
    edge.z_dot = &node.pred_precision * &edge.mu_dot_pred - &incoming.m * &e;
    edge.mu_dot = &node.cov * &edge.z_dot;
    let prior_term = edge.mu_dot_pred.transpose() * (&node.pred_precision * &node.pred_mean);
    let posterior_term = edge.z_dot.transpose() * &node.mean;
    let data_term = e.transpose() * (&incoming.mdot - &incoming.mddot);
    posterior_term - prior_term + data_term
}

/// One gradient step: returns the new free components `θ_free + γ g`.
pub fn rml_step(
    edge: &mut RmlEdgeState,
    transition: &DMatrix<f64>,
    node: &NodeFilterState,
    incoming: &MessageTriple,
    theta_free: &DVector<f64>,
    gamma: f64,
    mask: &FreeMask,
) -> (DVector<f64>, DVector<f64>) {
    let g = rml_gradient(edge, transition, node, incoming, mask);
    (theta_free + &g * gamma, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_keeps_parameter_but_propagates() {
        let mask = FreeMask::planar();
        let mut edge = RmlEdgeState::zeros(&mask);
        let node = NodeFilterState::prior(DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0]), 1.0).unwrap();
        let msg = MessageTriple {
            m: DMatrix::identity(4, 4),
            mdot: DVector::from_element(4, 1.0),
            mddot: DVector::zeros(4),
        };
        let theta = DVector::from_vec(vec![0.5, -0.5]);
        let (next, g) = rml_step(&mut edge, &DMatrix::identity(4, 4), &node, &msg, &theta, 0.0, &mask);
        assert_eq!(next, theta);
        assert!(g.amax() > 0.0);
        assert!(edge.mu_dot.amax() > 0.0);
        assert_eq!(edge.mu_dot.shape(), (4, 2));
    }
}
