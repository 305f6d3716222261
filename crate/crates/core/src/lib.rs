//! Distributed target tracking and sensor self-localization.
//!
//! Each sensor node runs a Kalman (or extended Kalman) filter in its own
//! coordinate frame. Nodes exchange information over a fixed number of
//! message rounds per time step so that every node fuses all measurements,
//! and each node learns the offsets to its neighbours' frames online, either
//! by recursive maximum likelihood or by online expectation maximization.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimation;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod messaging;
pub mod model;
pub mod network;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use estimation::{EstimatorConfig, OnlineEstimator, SelfTermCorrection, StepSchedule};
pub use filter::{
    local_term, predict, rts_smooth, update, CentralizedFilter, DistributedFilter, FilterMode, NetworkModel,
    NodeFilterState, Smoothed, StepRecord,
};
pub use messaging::{aggregate, coverage, init_messages, run_rounds, Aggregate, LocalTerm, MessageBoard, MessageTriple};
pub use model::{
    build_ct_model, build_cv_model, linearize_observation, linearize_transition, observe, simulate_target,
    MotionModel, ObservationLinearization, ObservationModel, Transition, TransitionLinearization,
};
pub use network::{
    build_topology, graph_diameter, path_sum, truth_from_positions, FreeMask, LocalizationParams, Topology,
};
