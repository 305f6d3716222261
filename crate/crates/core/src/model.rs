//! Target motion and sensor observation models.
//!
//! States are expressed in a node's local frame. The planar layout is
//! `[x, vx, y, vy]`; scalar experiments use a one-dimensional state.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::rng::{self, Purpose};

/// Indices of the planar position components in the `[x, vx, y, vy]` layout.
pub const PLANAR_POSITIONS: [usize; 2] = [0, 2];

/// Linear Gaussian motion `x_n = A x_{n-1} + b + B v_n`, `v_n ~ N(0, Q̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub transition: DMatrix<f64>,
    pub noise_gain: DMatrix<f64>,
    pub driving_cov: DMatrix<f64>,
    pub drift: DVector<f64>,
    /// `B Q̃ Bᵀ`, cached.
    pub process_cov: DMatrix<f64>,
    pub tau: f64,
    pub sigma_x: f64,
}

impl MotionModel {
    pub fn new(
        transition: DMatrix<f64>,
        noise_gain: DMatrix<f64>,
        driving_cov: DMatrix<f64>,
        drift: DVector<f64>,
    ) -> Result<Self> {
        let d = transition.nrows();
        if transition.ncols() != d
            || noise_gain.nrows() != d
            || driving_cov.nrows() != noise_gain.ncols()
            || driving_cov.ncols() != noise_gain.ncols()
            || drift.len() != d
        {
            return Err(Error::InvalidArgument(
                "motion model matrices have inconsistent shapes".into(),
            ));
        }
        let mut process_cov = &noise_gain * &driving_cov * noise_gain.transpose();
        crate::linalg::symmetrize(&mut process_cov);
        Ok(MotionModel {
            transition,
            noise_gain,
            driving_cov,
            drift,
            process_cov,
            tau: 1.0,
            sigma_x: f64::NAN,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_gain.ncols()
    }

    /// Scalar random walk `x_n = a x_{n-1} + v_n`, `v_n ~ N(0, q)`.
    pub fn scalar(a: f64, q: f64) -> Result<Self> {
        if q < 0.0 {
            return Err(Error::InvalidArgument("process variance must be >= 0".into()));
        }
        let mut m = MotionModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            DVector::zeros(1),
        )?;
        m.sigma_x = q.sqrt();
        Ok(m)
    }
}

fn cv_noise_gain(tau: f64) -> DMatrix<f64> {
    let h = 0.5 * tau * tau;
    DMatrix::from_row_slice(4, 2, &[h, 0.0, tau, 0.0, 0.0, h, 0.0, tau])
}

pub(crate) fn constant_velocity_unchecked(tau: f64, sigma_x: f64) -> MotionModel {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, tau, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, tau,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let mut m = MotionModel::new(
        a,
        cv_noise_gain(tau),
        DMatrix::identity(2, 2) * (sigma_x * sigma_x),
        DVector::zeros(4),
    )
    .expect("shapes are fixed");
    m.tau = tau;
    m.sigma_x = sigma_x;
    m
}

/// Nearly-constant-velocity model with white acceleration noise of std `sigma_x`.
pub fn build_cv_model(tau: f64, sigma_x: f64) -> Result<MotionModel> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    if !(sigma_x >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_x must be >= 0, got {sigma_x}")));
    }
    Ok(constant_velocity_unchecked(tau, sigma_x))
}

/// Coordinated-turn model: the velocity rotates at a fixed rate `omega`
/// (rad/s) while the position integrates it exactly over each step.
///
/// The model is linear and translation invariant, like the constant-velocity
/// model it reduces to as `omega -> 0`, but the target stays on a bounded
/// orbit, which keeps bearings-only geometry informative over long runs.
pub fn build_ct_model(tau: f64, sigma_x: f64, omega: f64) -> Result<MotionModel> {
    if omega == 0.0 {
        return build_cv_model(tau, sigma_x);
    }
    let mut m = build_cv_model(tau, sigma_x)?;
    let (s, c) = (omega * tau).sin_cos();
    let p = s / omega;
    let q = (1.0 - c) / omega;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, p,   0.0, -q,
        0.0, c,   0.0, -s,
        0.0, q,   1.0,  p,
        0.0, s,   0.0,  c,
    ]);
    m.transition = a;
    Ok(m)
}

/// Draws `steps` successive states after `x0` (which is not included).
pub fn simulate_target(
    model: &MotionModel,
    steps: usize,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let mut rng = rng::stream(seed, 0, Purpose::Trajectory);
    simulate_target_with(model, steps, x0, &mut rng)
}

pub fn simulate_target_with<R: Rng + ?Sized>(
    model: &MotionModel,
    steps: usize,
    x0: &DVector<f64>,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::InvalidArgument("initial state has wrong dimension".into()));
    }
    let root = psd_sqrt(&model.driving_cov);
    let noise_map = &model.noise_gain * root;
    let mut out = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for _ in 0..steps {
        let v = DVector::from_fn(model.noise_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        x = &model.transition * &x + &model.drift + &noise_map * v;
        out.push(x.clone());
    }
    Ok(out)
}

/// Sensor model of a single node.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    /// `y = C x + d + w`, `w ~ N(0, R)`.
    Linear {
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        noise_cov: DMatrix<f64>,
    },
    /// `y = atan2(x(1), x(3)) + w`, `w ~ N(0, sigma_w²)`, planar layout.
    Bearings { sigma_w: f64 },
}

impl ObservationModel {
    /// Scaled position fix `y = alpha * (selected components of x) + w` with
    /// `w ~ N(0, sigma_y² I)`.
    pub fn position(state_dim: usize, positions: &[usize], alpha: f64, sigma_y: f64) -> Result<Self> {
        if !(sigma_y > 0.0) {
            return Err(Error::InvalidArgument("sigma_y must be positive".into()));
        }
        if positions.iter().any(|&c| c >= state_dim) {
            return Err(Error::InvalidArgument("position index out of range".into()));
        }
        let mut matrix = DMatrix::zeros(positions.len(), state_dim);
        for (row, &col) in positions.iter().enumerate() {
            matrix[(row, col)] = alpha;
        }
        Ok(ObservationModel::Linear {
            matrix,
            offset: DVector::zeros(positions.len()),
            noise_cov: DMatrix::identity(positions.len(), positions.len()) * (sigma_y * sigma_y),
        })
    }

    pub fn bearings(sigma_w: f64) -> Result<Self> {
        if !(sigma_w > 0.0) {
            return Err(Error::InvalidArgument("sigma_w must be positive".into()));
        }
        Ok(ObservationModel::Bearings { sigma_w })
    }

    pub fn dim(&self) -> usize {
        match self {
            ObservationModel::Linear { matrix, .. } => matrix.nrows(),
            ObservationModel::Bearings { .. } => 1,
        }
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        match self {
            ObservationModel::Linear { noise_cov, .. } => noise_cov.clone(),
            ObservationModel::Bearings { sigma_w } => DMatrix::from_element(1, 1, sigma_w * sigma_w),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ObservationModel::Linear { .. })
    }

    /// Noise-free measurement function.
    pub fn mean(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            ObservationModel::Linear { matrix, offset, .. } => Ok(matrix * x + offset),
            ObservationModel::Bearings { .. } => Ok(DVector::from_element(1, bearing(x)?)),
        }
    }
}

fn bearing(x: &DVector<f64>) -> Result<f64> {
    let (px, py) = (x[PLANAR_POSITIONS[0]], x[PLANAR_POSITIONS[1]]);
    if px == 0.0 && py == 0.0 {
        return Err(Error::SingularGeometry);
    }
    Ok(px.atan2(py))
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn observe<R: Rng + ?Sized>(
    obs: &ObservationModel,
    x_local: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mean = obs.mean(x_local)?;
    let root = psd_sqrt(&obs.noise_cov());
    let w = DVector::from_fn(obs.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + root * w)
}

/// `y ≈ matrix · x + offset` around a linearization point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLinearization {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// `φ(x) ≈ matrix · x + offset` around a linearization point.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLinearization {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

pub fn linearize_observation(
    obs: &ObservationModel,
    mu_pred: &DVector<f64>,
) -> Result<ObservationLinearization> {
    match obs {
        ObservationModel::Linear { matrix, offset, .. } => Ok(ObservationLinearization {
            matrix: matrix.clone(),
            offset: offset.clone(),
        }),
        ObservationModel::Bearings { .. } => {
            let (i, j) = (PLANAR_POSITIONS[0], PLANAR_POSITIONS[1]);
            let (px, py) = (mu_pred[i], mu_pred[j]);
            let r2 = px * px + py * py;
            if r2 == 0.0 {
                return Err(Error::SingularGeometry);
            }
            let mut c = DMatrix::zeros(1, mu_pred.len());
            c[(0, i)] = py / r2;
            c[(0, j)] = -px / r2;
            let value = px.atan2(py);
            let offset = DVector::from_element(1, value - (&c * mu_pred)[0]);
            Ok(ObservationLinearization { matrix: c, offset })
        }
    }
}

/// State transition map `φ`.
pub trait Transition {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn linearize(&self, x: &DVector<f64>) -> TransitionLinearization {
        let matrix = self.jacobian(x);
        let offset = self.apply(x) - &matrix * x;
        TransitionLinearization { matrix, offset }
    }
}

impl Transition for MotionModel {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.drift
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.transition.clone()
    }

    // Exact pass-through, so that the extended filter reproduces the linear one bit for bit.
    fn linearize(&self, _x: &DVector<f64>) -> TransitionLinearization {
        TransitionLinearization {
            matrix: self.transition.clone(),
            offset: self.drift.clone(),
        }
    }
}

pub fn linearize_transition<T: Transition + ?Sized>(phi: &T, mu_filt: &DVector<f64>) -> TransitionLinearization {
    phi.linearize(mu_filt)
}
