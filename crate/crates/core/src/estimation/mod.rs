//! Online learning of the frame offsets.
//!
//! Every node `r` owns the estimates `θ^{r,j}` for its neighbours `j` and
//! updates them after each filter step using only its own state and the
//! messages it received. The two directions of an edge are learned
//! independently.

pub mod em;
pub mod offline;
pub mod rml;
pub mod schedule;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{DistributedFilter, NetworkModel, StepRecord};
use crate::network::{FreeMask, LocalizationParams, Topology};

pub use em::{
    backward_gain, burn_in_gate, em_mstep, em_sigma_tilde, em_stats_step, EmEdgeState, EmStepInput,
    SelfTermCorrection,
};
pub use offline::{
    batch_loglik, filter_batch, offline_em_iteration, sequential_em_iteration, BatchPass, OfflineEmOutcome,
    OfflineScheme,
};
pub use rml::{rml_gradient, rml_step, RmlEdgeState};
pub use schedule::StepSchedule;

/// Estimator selection as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// Offsets stay at their initial value.
    None,
    Rml {
        #[serde(default = "StepSchedule::rml")]
        schedule: StepSchedule,
    },
    Em {
        #[serde(default = "StepSchedule::em")]
        schedule: StepSchedule,
        #[serde(default)]
        burn_in: usize,
        #[serde(default)]
        correction: SelfTermCorrection,
    },
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::Rml {
            schedule: StepSchedule::rml(),
        }
    }
}

impl EstimatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorConfig::None => "none",
            EstimatorConfig::Rml { .. } => "rml",
            EstimatorConfig::Em { .. } => "em",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::None => Ok(()),
            EstimatorConfig::Rml { schedule } | EstimatorConfig::Em { schedule, .. } => schedule.validate(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDiagnostics {
    /// Maximization steps skipped because the reduced system was singular.
    pub skipped_msteps: u64,
    /// Largest gradient component seen (RML only).
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Fixed,
    Rml {
        schedule: StepSchedule,
        edges: Vec<rml::RmlEdgeState>,
    },
    Em {
        schedule: StepSchedule,
        burn_in: usize,
        correction: SelfTermCorrection,
        edges: Vec<em::EmEdgeState>,
    },
}

/// Per-edge estimator states for the whole network, indexed like
/// [`Topology::directed_edges`].
#[derive(Debug, Clone)]
pub struct OnlineEstimator {
    kind: Kind,
    pub diagnostics: EstimatorDiagnostics,
}

impl OnlineEstimator {
    pub fn new(config: &EstimatorConfig, topology: &Topology, mask: &FreeMask) -> Self {
        let count = topology.directed_count();
        let kind = match config {
            EstimatorConfig::None => Kind::Fixed,
            EstimatorConfig::Rml { schedule } => Kind::Rml {
                schedule: *schedule,
                edges: vec![rml::RmlEdgeState::zeros(mask); count],
            },
            EstimatorConfig::Em {
                schedule,
                burn_in,
                correction,
            } => Kind::Em {
                schedule: *schedule,
                burn_in: *burn_in,
                correction: *correction,
                edges: vec![em::EmEdgeState::zeros(mask.state_dim()); count],
            },
        };
        OnlineEstimator {
            kind,
            diagnostics: EstimatorDiagnostics::default(),
        }
    }

    /// Updates every `θ^{r,j}` after filter step `n` (counted from one).
    pub fn update(
        &mut self,
        n: usize,
        net: &NetworkModel,
        filter: &DistributedFilter,
        record: &StepRecord,
        params: &mut LocalizationParams,
    ) -> Result<()> {
        let topo = &net.topology;
        match &mut self.kind {
            Kind::Fixed => {}
            Kind::Rml { schedule, edges } => {
                let gamma = schedule.step_size(n + 1);
                let mask = params.mask().clone();
                for (idx, &(r, j)) in topo.directed_edges().iter().enumerate() {
                    let incoming = record.board.current(topo.edge_index(j, r).expect("reverse edge"));
                    let theta = params.free(r, j);
                    let (next, g) = rml::rml_step(
                        &mut edges[idx],
                        &record.transitions[r].matrix,
                        &filter.states[r],
                        incoming,
                        &theta,
                        gamma,
                        &mask,
                    );
                    if next.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument(format!("offset estimate of edge ({r}, {j}) diverged"))
                            .at_step(n));
                    }
                    self.diagnostics.max_abs_gradient = self.diagnostics.max_abs_gradient.max(g.amax());
                    params.set_free(r, j, &next);
                }
            }
            Kind::Em {
                schedule,
                burn_in,
                correction,
                edges,
            } => {
                let gamma = schedule.step_size(n);
                let apply = em::burn_in_gate(n, *burn_in);
                let mask = params.mask().clone();
                for (idx, &(r, j)) in topo.directed_edges().iter().enumerate() {
                    let back = topo.edge_index(j, r).expect("reverse edge");
                    let theta = params.get(r, j);
                    let input = em::EmStepInput {
                        previous: &record.previous[r],
                        current: &filter.states[r],
                        transition: &record.transitions[r],
                        last: record.board.current(back),
                        first: record.board.first(back),
                        theta: &theta,
                    };
                    let st = &mut edges[idx];
                    em::em_stats_step(st, &input, gamma, *correction);
                    if apply {
                        match em::em_mstep(&st.s1, &st.s2, &st.s3, &mask) {
                            Some(free) => params.set_free(r, j, &free),
                            None => self.diagnostics.skipped_msteps += 1,
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rml_edges(&self) -> Option<&[rml::RmlEdgeState]> {
        match &self.kind {
            Kind::Rml { edges, .. } => Some(edges),
            _ => None,
        }
    }

    pub fn em_edges(&self) -> Option<&[em::EmEdgeState]> {
        match &self.kind {
            Kind::Em { edges, .. } => Some(edges),
            _ => None,
        }
    }
}
