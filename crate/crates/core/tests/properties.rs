use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use distloc_core::estimation::{EstimatorConfig, OnlineEstimator, SelfTermCorrection, StepSchedule};
use distloc_core::model::wrap_angle;
use distloc_core::network::{offsets_from, relative_offset};
use distloc_core::oracle::{direct_sums, random_spd, random_tree, random_vector};
use distloc_core::verify::{random_params, random_problem};
use distloc_core::{aggregate, coverage, init_messages, path_sum, run_rounds, truth_from_positions};
use distloc_core::{DistributedFilter, FreeMask, LocalTerm};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_sums_reproduce_relative_positions(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let topo = random_tree(&mut r, n);
        let positions: Vec<DVector<f64>> = (0..n).map(|_| random_vector(&mut r, 2, 10.0)).collect();
        let mask = FreeMask::planar();
        let truth = truth_from_positions(&topo, mask.clone(), &positions).unwrap();
        for i in 0..n {
            for j in 0..n {
                let got = path_sum(&topo, &truth, &topo.shortest_path(i, j)).unwrap();
                let want = relative_offset(&mask, &positions, i, j);
                prop_assert_eq!(got.len(), 4);
                prop_assert!((got - want).amax() < 1e-9);
            }
        }
        prop_assert!(truth.antisymmetry_residual() < 1e-12);
    }

    #[test]
    fn aggregation_is_exact_on_trees(seed in any::<u64>(), n in 1usize..9, extra in 0usize..3) {
        let mut r = rng(seed);
        let topo = random_tree(&mut r, n);
        let locals: Vec<LocalTerm> = (0..n)
            .map(|_| LocalTerm { info: random_spd(&mut r, 4, 0.1), info_vec: random_vector(&mut r, 4, 1.0) })
            .collect();
        let params = random_params(&mut r, &topo, 5.0);
        let rounds = topo.diameter().max(1) + extra;
        let board = run_rounds(init_messages(&topo, &locals, &params).unwrap(), rounds, &topo, &locals, &params).unwrap();
        for v in 0..n {
            let got = aggregate(&board, &topo, v, &locals).unwrap();
            let want = direct_sums(&topo, &locals, &params, v).unwrap();
            let scale = 1.0 + want.info_offset.amax();
            prop_assert!((&got.info - &want.info).amax() < 1e-10);
            prop_assert!((&got.info_vec - &want.info_vec).amax() < 1e-10);
            prop_assert!((&got.info_offset - &want.info_offset).amax() < 1e-10 * scale);
        }
    }

    #[test]
    fn coverage_counts_each_node_once_within_reach(seed in any::<u64>(), n in 1usize..10, rounds in 1usize..6) {
        let mut r = rng(seed);
        let topo = random_tree(&mut r, n);
        for v in 0..n {
            let dist = topo.distances_from(v);
            let counts = coverage(&topo, rounds, v);
            for u in 0..n {
                let reach = dist[u].unwrap() <= rounds;
                prop_assert_eq!(counts[u], u64::from(reach));
            }
        }
    }

    #[test]
    fn offsets_from_agree_with_path_sums(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let topo = random_tree(&mut r, n);
        let params = random_params(&mut r, &topo, 3.0);
        let root = n / 2;
        let offsets = offsets_from(&topo, &params, root).unwrap();
        for (v, got) in offsets.iter().enumerate() {
            let want = path_sum(&topo, &params, &topo.shortest_path(root, v)).unwrap();
            prop_assert!((got - want).amax() < 1e-12);
        }
    }

    #[test]
    fn wrapped_angles_stay_in_half_open_interval(a in -1e3f64..1e3) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        let turns = (a - w) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn step_sizes_never_increase(gamma0 in 1e-4f64..1.0, hold in 0usize..50, expo in 0.51f64..1.0) {
        let s = StepSchedule::new(gamma0, hold, expo).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..200 {
            let g = s.step_size(n);
            prop_assert!(g > 0.0 && g <= last);
            last = g;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Velocity components never pick up an offset, whatever the estimator does.
    #[test]
    fn masked_components_stay_zero(seed in any::<u64>(), em in any::<bool>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, 5).unwrap();
        let topo = &p.net.topology;
        let mask = FreeMask::planar();
        let config = if em {
            EstimatorConfig::Em { schedule: StepSchedule::constant(0.3), burn_in: 0, correction: SelfTermCorrection::CurrentEstimate }
        } else {
            EstimatorConfig::Rml { schedule: StepSchedule::constant(0.05) }
        };
        let mut params = random_params(&mut r, topo, 2.0);
        let priors = p.priors(&params, 0).unwrap();
        let mut filter = DistributedFilter::new(priors);
        let mut est = OnlineEstimator::new(&config, topo, &mask);
        for (n, ys) in p.simulate(15, seed, 0).unwrap().iter().enumerate() {
            let record = filter.step(&p.net, ys, &params).unwrap();
            est.update(n + 1, &p.net, &filter, &record, &mut params).unwrap();
            for (_, theta) in params.iter() {
                prop_assert_eq!(theta[1], 0.0);
                prop_assert_eq!(theta[3], 0.0);
            }
        }
    }
}
