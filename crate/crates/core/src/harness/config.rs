//! Scenario files and their validation.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{EstimatorConfig, StepSchedule};
use crate::filter::{FilterMode, NetworkModel};
use crate::model::{build_ct_model, build_cv_model, MotionModel, ObservationModel, PLANAR_POSITIONS};
use crate::network::{truth_from_positions, FreeMask, LocalizationParams, Topology};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub runs: usize,
    pub steps: usize,
    /// Message rounds per step; the graph diameter when absent.
    #[serde(default)]
    pub rounds: Option<usize>,
    pub network: NetworkConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub initial_offsets: InitialOffsets,
    /// Keep per-edge errors every this many steps.
    #[serde(default = "one")]
    pub record_every: usize,
    /// Forces the filter variant; extended whenever a sensor is nonlinear.
    #[serde(default)]
    pub filter: Option<FilterMode>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Node positions in the global frame, one coordinate per free component.
    pub positions: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub motion: MotionConfig,
    pub observation: ObservationConfig,
    /// Target state at step zero in the global frame; zero when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Components that carry a frame offset; the positions when absent.
    #[serde(default)]
    pub free_components: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionConfig {
    ConstantVelocity { tau: f64, sigma_x: f64 },
    CoordinatedTurn { tau: f64, sigma_x: f64, omega: f64 },
    /// `x_n = a x_{n-1} + v_n`, `v_n ~ N(0, q)`.
    Scalar { a: f64, q: f64 },
}

impl MotionConfig {
    pub fn build(&self) -> Result<MotionModel> {
        match *self {
            MotionConfig::ConstantVelocity { tau, sigma_x } => build_cv_model(tau, sigma_x),
            MotionConfig::CoordinatedTurn { tau, sigma_x, omega } => build_ct_model(tau, sigma_x, omega),
            MotionConfig::Scalar { a, q } => MotionModel::scalar(a, q),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            MotionConfig::Scalar { .. } => 1,
            _ => 4,
        }
    }

    fn default_positions(&self) -> Vec<usize> {
        match self {
            MotionConfig::Scalar { .. } => vec![0],
            _ => PLANAR_POSITIONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Fixed(f64),
    /// Drawn uniformly per node, once per scenario.
    Range([f64; 2]),
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Range([0.75, 1.25])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationConfig {
    Position {
        sigma_y: f64,
        #[serde(default)]
        alpha: Alpha,
    },
    Bearings { sigma_w: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    /// Noise-free position of the target at step zero in the node's frame,
    /// zero velocity.
    #[default]
    PositionFix,
    /// The full target state at step zero in the node's frame.
    InitialState,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default)]
    pub mean: PriorMean,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    100.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            mean: PriorMean::default(),
            kappa: default_kappa(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialOffsets {
    #[default]
    Zero,
    Truth,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    ScenarioConfig::from_json(&text)
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(bad("runs", "must be at least 1"));
        }
        if self.steps < 1 {
            return Err(bad("steps", "must be at least 1"));
        }
        if self.record_every < 1 {
            return Err(bad("record_every", "must be at least 1"));
        }
        if self.rounds == Some(0) {
            return Err(bad("rounds", "must be at least 1"));
        }
        if self.network.positions.is_empty() {
            return Err(bad("network.positions", "at least one node is required"));
        }
        let free = self.free_components();
        if let Some(i) = self.network.positions.iter().position(|p| p.len() != free.len()) {
            return Err(bad(
                "network.positions",
                format!("node {i} has {} coordinates, expected {}", self.network.positions[i].len(), free.len()),
            ));
        }
        let d = self.model.motion.state_dim();
        if free.is_empty() || free.iter().any(|&c| c >= d) {
            return Err(bad("model.free_components", format!("must index a {d}-dimensional state")));
        }
        if let Some(x0) = &self.model.initial_state {
            if x0.len() != d {
                return Err(bad("model.initial_state", format!("expected {d} entries")));
            }
        }
        match self.model.observation {
            ObservationConfig::Position { sigma_y, alpha } => {
                if !(sigma_y > 0.0) {
                    return Err(bad("model.observation.sigma_y", "must be positive"));
                }
                let ok = match alpha {
                    Alpha::Fixed(a) => a > 0.0 && a.is_finite(),
                    Alpha::Range([lo, hi]) => lo > 0.0 && hi >= lo && hi.is_finite(),
                };
                if !ok {
                    return Err(bad("model.observation.alpha", "must lie in (0, inf) with low <= high"));
                }
            }
            ObservationConfig::Bearings { sigma_w } => {
                if !(sigma_w > 0.0) {
                    return Err(bad("model.observation.sigma_w", "must be positive"));
                }
                if d != 4 {
                    return Err(bad("model.observation", "bearings need a planar motion model"));
                }
                if self.filter == Some(FilterMode::Linear) {
                    return Err(bad("filter", "bearings need the extended filter"));
                }
            }
        }
        if !(self.prior.kappa > 0.0) {
            return Err(bad("prior.kappa", "must be positive"));
        }
        self.model.motion.build().map_err(|e| bad("model.motion", e))?;
        self.estimator.validate().map_err(|e| bad("estimator", e))?;
        self.topology().map_err(|e| bad("network.edges", e))?;
        Ok(())
    }

    /// Sets one sweepable parameter from its text form. Names are `rounds`
    /// (alias `K`), `sigma_x`, `sigma_y`, `sigma_ratio`, `gamma0` and
    /// `estimator`. `sigma_ratio` keeps the motion noise and sets the
    /// measurement noise to `sigma_x / ratio`.
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| bad(name, format!("`{value}` is not a number")))
        };
        match name {
            "K" | "rounds" => {
                let k = value.parse().map_err(|_| bad(name, format!("`{value}` is not a count")))?;
                self.rounds = Some(k);
            }
            "sigma_x" => match &mut self.model.motion {
                MotionConfig::ConstantVelocity { sigma_x, .. } | MotionConfig::CoordinatedTurn { sigma_x, .. } => {
                    *sigma_x = num()?
                }
                MotionConfig::Scalar { q, .. } => *q = num()?.powi(2),
            },
            "sigma_y" => match &mut self.model.observation {
                ObservationConfig::Position { sigma_y, .. } => *sigma_y = num()?,
                ObservationConfig::Bearings { sigma_w } => *sigma_w = num()?,
            },
            "sigma_ratio" => {
                let ratio = num()?;
                if !(ratio > 0.0) {
                    return Err(bad(name, "must be positive"));
                }
                let sx = match self.model.motion {
                    MotionConfig::ConstantVelocity { sigma_x, .. } | MotionConfig::CoordinatedTurn { sigma_x, .. } => {
                        sigma_x
                    }
                    MotionConfig::Scalar { q, .. } => q.sqrt(),
                };
                self.set_param("sigma_y", &(sx / ratio).to_string())?;
            }
            "gamma0" => match &mut self.estimator {
                EstimatorConfig::Rml { schedule } | EstimatorConfig::Em { schedule, .. } => schedule.gamma0 = num()?,
                EstimatorConfig::None => return Err(bad(name, "the scenario has no estimator")),
            },
            "estimator" => {
                self.estimator = match value {
                    "none" => EstimatorConfig::None,
                    "rml" => EstimatorConfig::Rml {
                        schedule: StepSchedule::rml(),
                    },
                    "em" => EstimatorConfig::Em {
                        schedule: StepSchedule::em(),
                        burn_in: 0,
                        correction: Default::default(),
                    },
                    other => return Err(bad(name, format!("unknown value `{other}`"))),
                }
            }
            other => return Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
        self.validate()
    }

    pub fn free_components(&self) -> Vec<usize> {
        self.model
            .free_components
            .clone()
            .unwrap_or_else(|| self.model.motion.default_positions())
    }

    pub fn topology(&self) -> Result<Topology> {
        let edges: Vec<(usize, usize)> = self.network.edges.iter().map(|e| (e[0], e[1])).collect();
        Topology::new(self.network.positions.len(), &edges)
    }

    /// Instantiates models, ground truth and per-node sensors.
    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let topology = self.topology()?;
        let mask = FreeMask::new(self.model.motion.state_dim(), &self.free_components())?;
        let positions: Vec<DVector<f64>> = self
            .network
            .positions
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect();
        let truth = truth_from_positions(&topology, mask.clone(), &positions)?;
        let motion = self.model.motion.build()?;
        let d = motion.state_dim();
        let sensor_positions = self.model.motion.default_positions();

        let mut scenario_rng = rng::stream(self.seed, 0, Purpose::Scenario);
        let sensors = (0..topology.node_count())
            .map(|_| match self.model.observation {
                ObservationConfig::Position { sigma_y, alpha } => {
                    let a = match alpha {
                        Alpha::Fixed(a) => a,
                        Alpha::Range([lo, hi]) if hi > lo => scenario_rng.random_range(lo..hi),
                        Alpha::Range([lo, _]) => lo,
                    };
                    ObservationModel::position(d, &sensor_positions, a, sigma_y)
                }
                ObservationConfig::Bearings { sigma_w } => ObservationModel::bearings(sigma_w),
            })
            .collect::<Result<Vec<_>>>()?;

        let mode = self.filter.unwrap_or(if sensors.iter().all(|s| s.is_linear()) {
            FilterMode::Linear
        } else {
            FilterMode::Extended
        });
        let diameter = topology.diameter();
        let rounds = self.rounds.unwrap_or(diameter.max(1));
        let mut warnings = Vec::new();
        if let Some(limit) = topology.safe_round_limit() {
            if rounds > limit {
                warnings.push(format!(
                    "{rounds} message rounds exceed the cycle-safe limit {limit}; information is counted more than once"
                ));
            }
        } else if rounds < diameter {
            warnings.push(format!(
                "{rounds} message rounds are fewer than the diameter {diameter}; each node fuses a partial neighbourhood"
            ));
        }
        let net = NetworkModel::new(topology, motion, sensors, rounds, mode)?;
        let initial_state = self
            .model
            .initial_state
            .as_ref()
            .map(|v| DVector::from_column_slice(v))
            .unwrap_or_else(|| DVector::zeros(d));
        Ok(Scenario {
            config: self.clone(),
            net,
            mask,
            positions,
            truth,
            initial_state,
            warnings,
        })
    }
}

/// A scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub net: NetworkModel,
    pub mask: FreeMask,
    pub positions: Vec<DVector<f64>>,
    pub truth: LocalizationParams,
    pub initial_state: DVector<f64>,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn initial_offsets(&self) -> LocalizationParams {
        match self.config.initial_offsets {
            InitialOffsets::Zero => LocalizationParams::zeros(&self.net.topology, self.mask.clone()),
            InitialOffsets::Truth => self.truth.clone(),
        }
    }
}
