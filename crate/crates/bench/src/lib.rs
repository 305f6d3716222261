//! Fixtures shared by the benches: a preset scenario with a pre-simulated
//! observation record, so timing loops measure filtering only.

use std::path::Path;

use nalgebra::DVector;

use distloc_core::harness::{load_config, Scenario};
use distloc_core::{DistributedFilter, Result};

pub struct Fixture {
    pub scenario: Scenario,
    /// `observations[step][node]`.
    pub observations: Vec<Vec<DVector<f64>>>,
}

impl Fixture {
    /// Loads `presets/<name>.json` with `rounds` message rounds and simulates `steps` steps.
    pub fn load(name: &str, rounds: Option<usize>, steps: usize) -> Result<Self> {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../presets/{name}.json"));
        let mut cfg = load_config(path)?;
        if rounds.is_some() {
            cfg.rounds = rounds;
        }
        let scenario = cfg.build()?;
        let observations = scenario.simulate(0, steps)?.observations;
        Ok(Fixture { scenario, observations })
    }

    pub fn filter(&self) -> Result<DistributedFilter> {
        Ok(DistributedFilter::new(self.scenario.priors()?))
    }
}
