//! Cross-checks branch-and-bound against exhaustive enumeration on tiny
//! random repositioning models.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fleetsim_mip::{brute_force_solve, solve_mip, LinearModel, SolverConfig, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::demand::DemandForecast;
use crate::geo::{GeoPoint, TravelTimeMatrix};
use crate::reposition::{build_fdr_model, FdrInputs, FleetSnapshot, RepositionParams};

pub const MAX_ENUM: u64 = 1 << 26;
const TOL: f64 = 1e-6;

/// Inputs of one random instance: at most 4 areas, at most 3 idle vehicles
/// per area, integer demand of at most 3 and a random coverage radius.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub snapshot: FleetSnapshot,
    pub forecast: DemandForecast,
    pub matrix: TravelTimeMatrix,
    pub params: RepositionParams,
    pub inputs: FdrInputs,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> RandomInstance {
    let n = rng.gen_range(1..=4);
    let mut snapshot = FleetSnapshot::empty(n, 0.0);
    let mut next_vehicle = 0;
    for a in 0..n {
        for _ in 0..rng.gen_range(0..=3) {
            snapshot.idle[a].push((next_vehicle, GeoPoint::new(0.0, 0.0)));
            next_vehicle += 1;
        }
        snapshot.touring[a] = rng.gen_range(0..=2);
        snapshot.repositioning[a] = rng.gen_range(0..=1);
    }
    let forecast = DemandForecast {
        values: (0..n).map(|_| rng.gen_range(0..=3) as f64).collect(),
        horizon_s: 1800.0,
        issued_at: 0.0,
    };
    let matrix = TravelTimeMatrix::from_fn(n, |_, _| rng.gen_range(30.0..600.0f64).round());
    let params = RepositionParams {
        productivity: rng.gen_range(1..=4) as f64,
        coverage_s: rng.gen_range(60.0..480.0f64).round(),
        alpha: rng.gen_range(0.1..=1.0),
        beta: rng.gen_range(1.0..1.5),
        ..RepositionParams::default()
    };
    let valid = (0..n).map(|_| rng.gen_bool(0.8)).collect();
    let inputs = FdrInputs::new(&matrix, params.coverage_s, valid);
    RandomInstance {
        snapshot,
        forecast,
        matrix,
        params,
        inputs,
    }
}

impl RandomInstance {
    pub fn model(&self) -> LinearModel {
        build_fdr_model(&self.snapshot, &self.forecast, &self.matrix, &self.params, &self.inputs)
            .expect("random instance dimensions agree")
            .model
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub index: usize,
    pub mip_objective: f64,
    pub brute_objective: f64,
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub count: usize,
    pub seed: u64,
    pub max_deviation: f64,
    pub mismatches: Vec<Mismatch>,
    pub elapsed_s: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub mip: f64,
    pub brute: f64,
    pub agree: bool,
}

/// Solves `model` both ways. Infeasible or unbounded results must agree in
/// status; optimal ones in objective.
pub fn compare(model: &LinearModel) -> Comparison {
    let mip = solve_mip(model, &SolverConfig::default());
    let brute = brute_force_solve(model, MAX_ENUM);
    match (mip, brute) {
        (Ok(m), Ok(b)) => {
            let agree = match (m.status, b.status) {
                (Status::Optimal, Status::Optimal) => (m.objective - b.objective).abs() <= TOL,
                (x, y) => x == y && x != Status::Failed && x != Status::NodeLimit,
            };
            Comparison {
                mip: m.objective,
                brute: b.objective,
                agree,
            }
        }
        _ => Comparison {
            mip: f64::NAN,
            brute: f64::NAN,
            agree: false,
        },
    }
}

/// Runs `count` random instances from `seed`. Mismatching models are written
/// to `dump_dir` in the solver's text format.
pub fn validate_solver(count: usize, seed: u64, dump_dir: Option<&Path>) -> std::io::Result<ValidationReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    let mut mismatches = Vec::new();
    for index in 0..count {
        let model = random_instance(&mut rng).model();
        let cmp = compare(&model);
        if cmp.mip.is_finite() && cmp.brute.is_finite() {
            max_deviation = max_deviation.max((cmp.mip - cmp.brute).abs());
        }
        if !cmp.agree {
            let dump = match dump_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("mismatch-{seed}-{index}.lp.txt"));
                    std::fs::write(&path, model.to_text())?;
                    Some(path)
                }
                None => None,
            };
            mismatches.push(Mismatch {
                index,
                mip_objective: cmp.mip,
                brute_objective: cmp.brute,
                dump,
            });
        }
    }
    Ok(ValidationReport {
        count,
        seed,
        max_deviation,
        mismatches,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
