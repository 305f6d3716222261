//! Batch EM on a stored 200-step record of the 11-node preset, comparing the
//! parallel and sequential per-edge schedules.
//!
//! `cargo run --release --example batch_em -- [seed] [first_round]`

use std::path::Path;

use distloc_core::estimation::{OfflineScheme, SelfTermCorrection};
use distloc_core::harness::load_config;
use distloc_core::network::LocalizationParams;
use distloc_core::verify::offline_em_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let correction = match args.next().as_deref() {
        Some("first_round") => SelfTermCorrection::FirstRound,
        _ => SelfTermCorrection::CurrentEstimate,
    };

    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/fig2a.json");
    let mut cfg = load_config(preset)?;
    cfg.seed = seed;
    let scenario = cfg.build()?;
    let sim = scenario.simulate(0, 200)?;
    let priors = scenario.priors()?;
    let start = LocalizationParams::zeros(&scenario.net.topology, scenario.mask.clone());

    for scheme in [OfflineScheme::Parallel, OfflineScheme::Sequential] {
        let t = offline_em_trace(
            &scenario.net,
            &priors,
            &sim.observations,
            &start,
            &scenario.truth,
            50,
            scheme,
            correction,
            0,
        )?;
        println!("{scheme:?}");
        for (i, ll) in t.logliks.iter().enumerate().filter(|(i, _)| *i < 3 || i % 10 == 0) {
            println!("  iteration {i:>2}: log-likelihood {ll:.3}");
        }
        println!(
            "  worst drop {:.3e}, final rmse {:.4}, max |error| {:.4}",
            t.worst_drop, t.final_rmse, t.final_max_abs
        );
    }
    Ok(())
}
