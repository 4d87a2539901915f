mod common;

use common::random_model;
use fleetsim_mip::{brute_force_solve, solve_lp, solve_mip, LinearModel, SolverConfig, Status};
use proptest::prelude::*;

fn small_mip(seed: u64) -> LinearModel {
    random_model(seed, 6, 5, 0.7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn mip_matches_brute_force(seed in any::<u64>()) {
        let model = small_mip(seed);
        let lp = solve_lp(&model);
        prop_assume!(lp.status != Status::Unbounded);
        let bb = solve_mip(&model, &SolverConfig::default()).unwrap();
        let bf = brute_force_solve(&model, 1_000_000).unwrap();
        prop_assert_eq!(bb.status, bf.status);
        if bb.status == Status::Optimal {
            prop_assert!((bb.objective - bf.objective).abs() <= 1e-6 * (1.0 + bf.objective.abs()),
                "bb {} bf {}", bb.objective, bf.objective);
        }
    }

    #[test]
    fn mip_never_beats_its_relaxation(seed in any::<u64>()) {
        let model = small_mip(seed);
        let lp = solve_lp(&model);
        prop_assume!(lp.status == Status::Optimal);
        let bb = solve_mip(&model, &SolverConfig::default()).unwrap();
        if bb.status == Status::Optimal {
            prop_assert!(bb.objective <= lp.objective + 1e-6);
        }
    }

    #[test]
    fn optimal_solutions_pass_independent_check(seed in any::<u64>()) {
        let model = small_mip(seed);
        prop_assume!(solve_lp(&model).status == Status::Optimal);
        let cfg = SolverConfig::default();
        let bb = solve_mip(&model, &cfg).unwrap();
        if bb.status == Status::Optimal {
            prop_assert!(model.check(&bb.values, 1e-6, cfg.integrality_tol).is_ok());
        }
    }

    #[test]
    fn solves_are_bit_identical(seed in any::<u64>()) {
        let model = small_mip(seed);
        prop_assume!(solve_lp(&model).status != Status::Unbounded);
        let cfg = SolverConfig::default();
        let a = solve_mip(&model, &cfg).unwrap();
        let b = solve_mip(&model, &cfg).unwrap();
        prop_assert_eq!(a.status, b.status);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.values), bits(&b.values));
    }

    #[test]
    fn positive_objective_scaling_keeps_argmax(seed in any::<u64>(), factor in prop::sample::select(vec![2.0, 4.0, 10.0])) {
        let model = small_mip(seed);
        prop_assume!(solve_lp(&model).status == Status::Optimal);
        let cfg = SolverConfig::default();
        let a = solve_mip(&model, &cfg).unwrap();
        prop_assume!(a.status == Status::Optimal);
        let b = solve_mip(&model.scaled_objective(factor), &cfg).unwrap();
        prop_assert_eq!(b.status, Status::Optimal);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-7, "{:?} vs {:?}", a.values, b.values);
        }
    }

    #[test]
    fn instance_text_round_trips(seed in any::<u64>()) {
        let model = small_mip(seed);
        let back = LinearModel::from_text(&model.to_text()).unwrap();
        prop_assert_eq!(model, back);
    }
}
