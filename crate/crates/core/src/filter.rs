//! Per-node information filters fused through message rounds, plus the
//! centralized covariance-form filter and RTS smoother used as references.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_log_det, symmetrize};
use crate::messaging::{aggregate, init_messages, run_rounds, Aggregate, LocalTerm, MessageBoard};
use crate::model::{
    linearize_observation, wrap_angle, MotionModel, ObservationModel, Transition, TransitionLinearization,
};
use crate::network::{LocalizationParams, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFilterState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub pred_mean: DVector<f64>,
    pub pred_cov: DMatrix<f64>,
    /// `pred_cov⁻¹`.
    pub pred_precision: DMatrix<f64>,
    /// Posterior precision `M`.
    pub precision: DMatrix<f64>,
    /// Posterior information vector `z`, with `mean = precision⁻¹ z`.
    pub info: DVector<f64>,
}

impl NodeFilterState {
    /// Gaussian prior `N(mean, kappa I)` treated as the filtered state at step zero.
    pub fn prior(mean: DVector<f64>, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidArgument("prior variance must be positive".into()));
        }
        let d = mean.len();
        let cov = DMatrix::identity(d, d) * kappa;
        let precision = DMatrix::identity(d, d) / kappa;
        let info = &precision * &mean;
        Ok(NodeFilterState {
            pred_mean: mean.clone(),
            pred_cov: cov.clone(),
            pred_precision: precision.clone(),
            mean,
            cov,
            precision,
            info,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }
}

/// Time update: `pred_mean = A mean + b`, `pred_cov = A cov Aᵀ + Q`.
pub fn predict(
    state: &NodeFilterState,
    lin: &TransitionLinearization,
    process_cov: &DMatrix<f64>,
) -> Result<NodeFilterState> {
    let a = &lin.matrix;
    let pred_mean = a * &state.mean + &lin.offset;
    let mut pred_cov = a * &state.cov * a.transpose() + process_cov;
    symmetrize(&mut pred_cov);
    let pred_precision = spd_inverse(&pred_cov, "predicted covariance")?;
    Ok(NodeFilterState {
        pred_mean,
        pred_cov,
        pred_precision,
        ..state.clone()
    })
}

/// Measurement update from the network-wide aggregate seen by this node.
pub fn update(state: &NodeFilterState, agg: &Aggregate) -> Result<NodeFilterState> {
    let mut precision = &state.pred_precision + &agg.info;
    symmetrize(&mut precision);
    let info = &state.pred_precision * &state.pred_mean + &agg.info_vec - &agg.info_offset;
    let cov = spd_inverse(&precision, "posterior precision")?;
    let mean = &cov * &info;
    Ok(NodeFilterState {
        mean,
        cov,
        precision,
        info,
        ..state.clone()
    })
}

/// Information contributed by measurement `y`, linearized at `pred_mean`
/// when the sensor is nonlinear.
pub fn local_term(
    obs: &ObservationModel,
    noise_precision: &DMatrix<f64>,
    y: &DVector<f64>,
    pred_mean: &DVector<f64>,
) -> Result<LocalTerm> {
    match obs {
        ObservationModel::Linear { matrix, offset, .. } => {
            Ok(LocalTerm::from_linear(matrix, noise_precision, y, offset))
        }
        ObservationModel::Bearings { .. } => {
            let lin = linearize_observation(obs, pred_mean)?;
            // Y - d = wrap(Y - ψ(μ)) + C μ, keeping the innovation on the short arc.
            let predicted = lin.offset[0] + (&lin.matrix * pred_mean)[0];
            let innovation = wrap_angle(y[0] - predicted);
            let shifted = DVector::from_element(1, innovation) + &lin.matrix * pred_mean;
            Ok(LocalTerm::from_linear(
                &lin.matrix,
                noise_precision,
                &shifted,
                &DVector::zeros(1),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Kalman filter; every sensor must be linear.
    #[default]
    Linear,
    /// Extended filter: the transition is linearized at the previous filtered
    /// mean and each sensor at the node's own predicted mean.
    Extended,
}

/// Everything a node needs to know about the network and the models.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub topology: Topology,
    pub motion: MotionModel,
    pub sensors: Vec<ObservationModel>,
    pub noise_precisions: Vec<DMatrix<f64>>,
    pub rounds: usize,
    pub mode: FilterMode,
}

impl NetworkModel {
    pub fn new(
        topology: Topology,
        motion: MotionModel,
        sensors: Vec<ObservationModel>,
        rounds: usize,
        mode: FilterMode,
    ) -> Result<Self> {
        if sensors.len() != topology.node_count() {
            return Err(Error::InvalidArgument(format!(
                "{} sensors for {} nodes",
                sensors.len(),
                topology.node_count()
            )));
        }
        if rounds < 1 {
            return Err(Error::InvalidArgument("at least one message round is required".into()));
        }
        let d = motion.state_dim();
        for s in &sensors {
            match s {
                ObservationModel::Linear { matrix, .. } if matrix.ncols() != d => {
                    return Err(Error::InvalidArgument("sensor matrix does not match the state".into()));
                }
                ObservationModel::Bearings { .. } if d != 4 => {
                    return Err(Error::InvalidArgument("bearings sensors need the planar state".into()));
                }
                ObservationModel::Bearings { .. } if mode == FilterMode::Linear => {
                    return Err(Error::Unsupported("bearings sensors need the extended filter"));
                }
                _ => {}
            }
        }
        let noise_precisions = sensors
            .iter()
            .map(|s| spd_inverse(&s.noise_cov(), "measurement noise covariance"))
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkModel {
            topology,
            motion,
            sensors,
            noise_precisions,
            rounds,
            mode,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.motion.state_dim()
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    fn transition_at(&self, mean: &DVector<f64>) -> TransitionLinearization {
        match self.mode {
            FilterMode::Linear => TransitionLinearization {
                matrix: self.motion.transition.clone(),
                offset: self.motion.drift.clone(),
            },
            FilterMode::Extended => self.motion.linearize(mean),
        }
    }
}

/// Quantities from one filter step that the parameter estimators consume.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Filtered states at the previous step.
    pub previous: Vec<NodeFilterState>,
    /// Transition used by each node for this prediction.
    pub transitions: Vec<TransitionLinearization>,
    pub locals: Vec<LocalTerm>,
    pub board: MessageBoard,
}

/// One filter per node, advanced in lock step.
#[derive(Debug, Clone)]
pub struct DistributedFilter {
    pub states: Vec<NodeFilterState>,
    step: usize,
}

impl DistributedFilter {
    pub fn new(priors: Vec<NodeFilterState>) -> Self {
        DistributedFilter { states: priors, step: 0 }
    }

    /// Number of completed steps.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Predict at every node, exchange messages, update every node.
    pub fn step(
        &mut self,
        net: &NetworkModel,
        observations: &[DVector<f64>],
        params: &LocalizationParams,
    ) -> Result<StepRecord> {
        let n = net.node_count();
        if observations.len() != n || self.states.len() != n {
            return Err(Error::InvalidArgument("one observation and one state per node expected".into()));
        }
        let step = self.step + 1;
        let q = &net.motion.process_cov;

        let mut transitions = Vec::with_capacity(n);
        let mut predicted = Vec::with_capacity(n);
        let mut locals = Vec::with_capacity(n);
        for r in 0..n {
            let lin = net.transition_at(&self.states[r].mean);
            let pred = predict(&self.states[r], &lin, q).map_err(|e| e.at_step(step))?;
            let term = local_term(&net.sensors[r], &net.noise_precisions[r], &observations[r], &pred.pred_mean)
                .map_err(|e| e.at_step(step))?;
            transitions.push(lin);
            predicted.push(pred);
            locals.push(term);
        }

        let board = init_messages(&net.topology, &locals, params)?;
        let board = run_rounds(board, net.rounds, &net.topology, &locals, params)?;

        let mut updated = Vec::with_capacity(n);
        for (r, pred) in predicted.iter().enumerate() {
            let agg = aggregate(&board, &net.topology, r, &locals)?;
            updated.push(update(pred, &agg).map_err(|e| e.at_step(step))?);
        }
        let previous = std::mem::replace(&mut self.states, updated);
        self.step = step;
        Ok(StepRecord {
            previous,
            transitions,
            locals,
            board,
        })
    }
}

/// Kalman filter on the stacked measurements of all nodes, expressed in the
/// frame of one reference node. Covariance form, independent of the
/// information-form update above.
#[derive(Debug, Clone)]
pub struct CentralizedFilter {
    pub reference: usize,
    pub state: NodeFilterState,
    pub loglik: f64,
    pub history: Vec<NodeFilterState>,
}

impl CentralizedFilter {
    pub fn new(reference: usize, prior: NodeFilterState) -> Self {
        CentralizedFilter {
            reference,
            state: prior,
            loglik: 0.0,
            history: Vec::new(),
        }
    }

    /// Advances one step. `offsets[v]` is `θ^{reference,v}`, so node `v`
    /// measures `x + offsets[v]`. Returns `log p(Y_n | Y_{1:n-1})`.
    pub fn step(
        &mut self,
        motion: &MotionModel,
        sensors: &[ObservationModel],
        observations: &[DVector<f64>],
        offsets: &[DVector<f64>],
    ) -> Result<f64> {
        let step = self.history.len() + 1;
        let d = motion.state_dim();
        let a = &motion.transition;
        let pred_mean = a * &self.state.mean + &motion.drift;
        let mut pred_cov = a * &self.state.cov * a.transpose() + &motion.process_cov;
        symmetrize(&mut pred_cov);

        let rows: usize = sensors.iter().map(|s| s.dim()).sum();
        let mut h = DMatrix::zeros(rows, d);
        let mut shift = DVector::zeros(rows);
        let mut y = DVector::zeros(rows);
        let mut r = DMatrix::zeros(rows, rows);
        let mut at = 0;
        for (v, sensor) in sensors.iter().enumerate() {
            let ObservationModel::Linear { matrix, offset, noise_cov } = sensor else {
                return Err(Error::Unsupported("centralized reference filter needs linear sensors"));
            };
            let p = matrix.nrows();
            h.view_mut((at, 0), (p, d)).copy_from(matrix);
            shift.rows_mut(at, p).copy_from(&(matrix * &offsets[v] + offset));
            y.rows_mut(at, p).copy_from(&observations[v]);
            r.view_mut((at, at), (p, p)).copy_from(noise_cov);
            at += p;
        }

        let innovation = &y - (&h * &pred_mean + shift);
        let mut s = &h * &pred_cov * h.transpose() + &r;
        symmetrize(&mut s);
        let s_inv = spd_inverse(&s, "innovation covariance").map_err(|e| e.at_step(step))?;
        let gain = &pred_cov * h.transpose() * &s_inv;
        let mean = &pred_mean + &gain * &innovation;
        let i_kh = DMatrix::identity(d, d) - &gain * &h;
        let mut cov = &i_kh * &pred_cov * i_kh.transpose() + &gain * &r * gain.transpose();
        symmetrize(&mut cov);

        let quad = innovation.dot(&(&s_inv * &innovation));
        let inc = -0.5 * (quad + spd_log_det(&s, "innovation covariance")? + rows as f64 * (2.0 * PI).ln());

        let pred_precision = spd_inverse(&pred_cov, "predicted covariance").map_err(|e| e.at_step(step))?;
        let precision = spd_inverse(&cov, "posterior covariance").map_err(|e| e.at_step(step))?;
        let info = &precision * &mean;
        self.state = NodeFilterState {
            mean,
            cov,
            pred_mean,
            pred_cov,
            pred_precision,
            precision,
            info,
        };
        self.history.push(self.state.clone());
        self.loglik += inc;
        Ok(inc)
    }
}

/// Smoothed marginal `p(x_n | Y_{1:T})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Rauch-Tung-Striebel backward pass over a stored forward pass.
///
/// `history[n]` holds the prediction and the filtered moments of step `n`;
/// `transitions[n]` is the matrix that produced `history[n]`'s prediction.
pub fn rts_smooth(history: &[NodeFilterState], transitions: &[DMatrix<f64>]) -> Vec<Smoothed> {
    let t = history.len();
    let mut out: Vec<Smoothed> = Vec::with_capacity(t);
    if t == 0 {
        return out;
    }
    out.push(Smoothed {
        mean: history[t - 1].mean.clone(),
        cov: history[t - 1].cov.clone(),
    });
    for n in (0..t - 1).rev() {
        let next = &history[n + 1];
        let gain = &history[n].cov * transitions[n + 1].transpose() * &next.pred_precision;
        let later = out.last().unwrap();
        let mean = &history[n].mean + &gain * (&later.mean - &next.pred_mean);
        let mut cov = &history[n].cov + &gain * (&later.cov - &next.pred_cov) * gain.transpose();
        symmetrize(&mut cov);
        out.push(Smoothed { mean, cov });
    }
    out.reverse();
    out
}
