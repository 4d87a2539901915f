mod common;

use common::{random_model, tableau_simplex, OracleStatus};
use fleetsim_mip::{solve_lp, ModelBuilder, Sense, SolverConfig, Status};

fn to_oracle(status: Status) -> OracleStatus {
    match status {
        Status::Optimal => OracleStatus::Optimal,
        Status::Infeasible => OracleStatus::Infeasible,
        Status::Unbounded => OracleStatus::Unbounded,
        other => panic!("unexpected LP status {other:?}"),
    }
}

#[test]
fn oracle_agrees_on_textbook_example() {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
    let mut b = ModelBuilder::new();
    let x = b.continuous(0.0, f64::INFINITY, 3.0);
    let y = b.continuous(0.0, f64::INFINITY, 5.0);
    b.add_row([(x, 1.0)], Sense::Le, 4.0);
    b.add_row([(y, 2.0)], Sense::Le, 12.0);
    b.add_row([(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
    let m = b.seal().unwrap();
    let (st, obj) = tableau_simplex(&m);
    assert_eq!(st, OracleStatus::Optimal);
    assert!((obj - 36.0).abs() < 1e-9);
    let s = solve_lp(&m);
    assert!((s.objective - 36.0).abs() < 1e-9);
}

#[test]
fn random_dense_lps_match_tableau_oracle() {
    let cfg = SolverConfig::default();
    let mut counts = [0usize; 3];
    for seed in 0..50u64 {
        let model = random_model(1000 + seed, 20, 20, 0.0);
        let (oracle_status, oracle_obj) = tableau_simplex(&model);
        let sol = solve_lp(&model);
        assert_eq!(to_oracle(sol.status), oracle_status, "seed {seed}");
        counts[oracle_status as usize] += 1;
        if oracle_status == OracleStatus::Optimal {
            assert!(
                (sol.objective - oracle_obj).abs() <= 1e-6 * (1.0 + oracle_obj.abs()),
                "seed {seed}: simplex {} vs oracle {}",
                sol.objective,
                oracle_obj
            );
            model.check(&sol.values, cfg.feasibility_tol * 10.0, 1.0).unwrap();
        }
    }
    // the generator must exercise the optimal path most of the time
    assert!(counts[0] >= 30, "{counts:?}");
}

#[test]
fn wider_random_lps_match_tableau_oracle() {
    for seed in 0..150u64 {
        let model = random_model(77_000 + seed, 20, 20, 0.0);
        let (oracle_status, oracle_obj) = tableau_simplex(&model);
        let sol = solve_lp(&model);
        assert_eq!(to_oracle(sol.status), oracle_status, "seed {seed}");
        if oracle_status == OracleStatus::Optimal {
            assert!((sol.objective - oracle_obj).abs() <= 1e-6 * (1.0 + oracle_obj.abs()), "seed {seed}");
        }
    }
}
