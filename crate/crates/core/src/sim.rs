//! Measurement generation: one global target seen by every node in its own frame.

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::model::{observe, ObservationModel};
use crate::network::FreeMask;

/// Target state in the frame of a node sitting at `position`: `x − E p`.
pub fn local_state(global: &DVector<f64>, mask: &FreeMask, position: &DVector<f64>) -> DVector<f64> {
    global - mask.embed(position)
}

/// Draws one measurement per node of the same global state.
pub fn observe_network<R: Rng>(
    sensors: &[ObservationModel],
    global: &DVector<f64>,
    mask: &FreeMask,
    positions: &[DVector<f64>],
    rngs: &mut [R],
) -> Result<Vec<DVector<f64>>> {
    sensors
        .iter()
        .zip(positions)
        .zip(rngs.iter_mut())
        .map(|((sensor, p), rng)| observe(sensor, &local_state(global, mask, p), rng))
        .collect()
}
