//! Forecast-driven idle vehicle repositioning and the reactive baseline.

use std::collections::HashSet;
use std::time::Instant;

use fleetsim_mip::{solve_mip, LinearModel, MipError, ModelBuilder, Sense, SolverConfig, Status, VarId};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandForecast;
use crate::dispatch::VehicleId;
use crate::geo::{AreaId, GeoPoint, Grid, TravelTimeMatrix, TravelTimeProvider};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepositionParams {
    /// Forecast horizon h in seconds.
    pub horizon_s: f64,
    /// Planning interval f in seconds.
    pub interval_s: f64,
    /// Requests one idle vehicle serves per horizon (p).
    pub productivity: f64,
    /// Coverage radius t^c in seconds.
    pub coverage_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for RepositionParams {
    fn default() -> Self {
        RepositionParams {
            horizon_s: 1800.0,
            interval_s: 180.0,
            productivity: 8.0,
            coverage_s: 240.0,
            alpha: 0.7,
            beta: 1.05,
            w1: 1000.0,
            w2: 10.0,
        }
    }
}

impl RepositionParams {
    /// Returns the offending parameter name and reason.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let pos = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((name, format!("must be positive, got {v}")))
            }
        };
        pos("horizon_s", self.horizon_s)?;
        pos("interval_s", self.interval_s)?;
        pos("coverage_s", self.coverage_s)?;
        if !(self.productivity >= 1.0 && self.productivity.is_finite()) {
            return Err(("productivity", format!("must be at least 1, got {}", self.productivity)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(("beta", format!("must be at least 1, got {}", self.beta)));
        }
        if !(self.w2 >= 10.0 && self.w2.is_finite()) {
            return Err(("w2", format!("must be at least 10, got {}", self.w2)));
        }
        if !(self.w1 >= 100.0 * self.w2 && self.w1.is_finite()) {
            return Err(("w1", format!("must be at least 100 * w2 = {}, got {}", 100.0 * self.w2, self.w1)));
        }
        Ok(())
    }
}

/// Per-area fleet state at a planning instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub time: f64,
    /// Idle vehicles located in each area, sorted by id.
    pub idle: Vec<Vec<(VehicleId, GeoPoint)>>,
    /// Touring vehicles currently located in each area.
    pub touring: Vec<u32>,
    /// Vehicles repositioning towards each area.
    pub repositioning: Vec<u32>,
}

impl FleetSnapshot {
    pub fn empty(n_areas: usize, time: f64) -> Self {
        FleetSnapshot {
            time,
            idle: vec![Vec::new(); n_areas],
            touring: vec![0; n_areas],
            repositioning: vec![0; n_areas],
        }
    }

    pub fn num_areas(&self) -> usize {
        self.idle.len()
    }

    pub fn idle_count(&self, a: AreaId) -> usize {
        self.idle[a].len()
    }
}

/// Distinct past pickup locations per area.
#[derive(Debug, Clone, Default)]
pub struct TargetPool {
    points: Vec<Vec<GeoPoint>>,
    seen: HashSet<(u64, u64)>,
}

impl TargetPool {
    pub fn new(n_areas: usize) -> Self {
        TargetPool {
            points: vec![Vec::new(); n_areas],
            seen: HashSet::new(),
        }
    }

    /// Adds `p` unless the exact coordinates are already present.
    pub fn add(&mut self, p: GeoPoint, grid: &Grid) -> bool {
        if !self.seen.insert((p.lat.to_bits(), p.lon.to_bits())) {
            return false;
        }
        self.points[grid.locate(p)].push(p);
        true
    }

    pub fn targets(&self, a: AreaId) -> &[GeoPoint] {
        &self.points[a]
    }

    pub fn is_valid_target(&self, a: AreaId) -> bool {
        !self.points[a].is_empty()
    }

    pub fn total(&self) -> usize {
        self.seen.len()
    }

    pub fn num_areas(&self) -> usize {
        self.points.len()
    }
}

/// Adds the request's pickup to the pool.
pub fn update_target_pool(pool: &mut TargetPool, origin: GeoPoint, grid: &Grid) -> bool {
    pool.add(origin, grid)
}

/// Reachability lists and valid target areas.
#[derive(Debug, Clone)]
pub struct FdrInputs {
    /// `reach[i]` lists every j with t_ij <= t^c, ascending.
    pub reach: Vec<Vec<AreaId>>,
    pub valid_target: Vec<bool>,
}

impl FdrInputs {
    pub fn new(matrix: &TravelTimeMatrix, coverage_s: f64, valid_target: Vec<bool>) -> Self {
        let n = matrix.num_areas();
        assert_eq!(valid_target.len(), n);
        let reach = (0..n)
            .map(|i| (0..n).filter(|&j| matrix.get(i, j) <= coverage_s).collect())
            .collect();
        FdrInputs { reach, valid_target }
    }

    pub fn from_pool(matrix: &TravelTimeMatrix, coverage_s: f64, pool: &TargetPool) -> Self {
        let valid = (0..pool.num_areas()).map(|a| pool.is_valid_target(a)).collect();
        Self::new(matrix, coverage_s, valid)
    }

    pub fn reachable(&self, i: AreaId, j: AreaId) -> bool {
        self.reach[i].binary_search(&j).is_ok()
    }
}

/// A built FDR model with the area pair behind each variable.
#[derive(Debug, Clone)]
pub struct FdrModel {
    pub model: LinearModel,
    pub x_vars: Vec<(AreaId, AreaId, VarId)>,
    pub c_vars: Vec<(AreaId, AreaId, VarId)>,
}

impl FdrModel {
    /// Σ W1·d̂_j·c_ij for the given variable values.
    pub fn coverage_term(&self, forecast: &DemandForecast, w1: f64, values: &[f64]) -> f64 {
        self.c_vars
            .iter()
            .map(|&(_, j, v)| w1 * forecast.values[j] * values[v])
            .sum()
    }

    pub fn moves(&self, values: &[f64]) -> Vec<(AreaId, AreaId, u32)> {
        self.x_vars
            .iter()
            .filter_map(|&(i, j, v)| {
                let k = values[v].round();
                (k >= 1.0).then_some((i, j, k as u32))
            })
            .collect()
    }
}

/// Builds the coverage model. Idle vehicles count toward the capacity of the
/// area they end up in, so idle capacity that stays put needs no move
/// variable. Variables that can only be zero in every optimum are omitted:
/// moves out of areas without idle vehicles, moves to invalid targets or to
/// areas that reach no forecast demand, and coverage of zero-demand or
/// unreachable areas.
pub fn build_fdr_model(
    snapshot: &FleetSnapshot,
    forecast: &DemandForecast,
    t: &TravelTimeMatrix,
    params: &RepositionParams,
    inputs: &FdrInputs,
) -> Result<FdrModel, MipError> {
    let n = snapshot.num_areas();
    if forecast.values.len() != n || t.num_areas() != n || inputs.reach.len() != n {
        return Err(MipError::InvalidModel(format!(
            "dimension mismatch: snapshot {n}, forecast {}, matrix {}, reach {}",
            forecast.values.len(),
            t.num_areas(),
            inputs.reach.len()
        )));
    }
    let demand = |j: AreaId| forecast.values[j] > 0.0;
    let covers: Vec<bool> = (0..n).map(|j| inputs.reach[j].iter().any(|&k| demand(k))).collect();
    let sources: Vec<AreaId> = (0..n).filter(|&i| snapshot.idle_count(i) > 0).collect();
    let targets: Vec<AreaId> = (0..n).filter(|&j| inputs.valid_target[j] && covers[j]).collect();
    let total_idle: usize = sources.iter().map(|&i| snapshot.idle_count(i)).sum();
    let has_capacity = |i: AreaId| {
        snapshot.idle_count(i) > 0
            || snapshot.repositioning[i] > 0
            || snapshot.touring[i] > 0
            || (inputs.valid_target[i] && total_idle > 0)
    };

    let mut b = ModelBuilder::with_capacity(sources.len() * targets.len(), 3 * n);
    let mut x_vars = Vec::new();
    let mut out_of: Vec<Vec<VarId>> = vec![Vec::new(); n];
    let mut into: Vec<Vec<VarId>> = vec![Vec::new(); n];
    for &i in &sources {
        let cap = snapshot.idle_count(i) as f64;
        for &j in &targets {
            if i == j {
                continue;
            }
            let v = b.integer(0.0, cap, -params.w2 - t.get(i, j));
            x_vars.push((i, j, v));
            out_of[i].push(v);
            into[j].push(v);
        }
    }
    let mut c_vars = Vec::new();
    let mut cover_from: Vec<Vec<VarId>> = vec![Vec::new(); n];
    let mut cover_of: Vec<Vec<VarId>> = vec![Vec::new(); n];
    for i in (0..n).filter(|&i| has_capacity(i)) {
        for &j in inputs.reach[i].iter().filter(|&&j| demand(j)) {
            let v = b.continuous(0.0, f64::INFINITY, params.w1 * forecast.values[j] - params.beta * t.get(i, j));
            c_vars.push((i, j, v));
            cover_from[i].push(v);
            cover_of[j].push(v);
        }
    }
    for &i in &sources {
        if !out_of[i].is_empty() {
            b.add_row(out_of[i].iter().map(|&v| (v, 1.0)), Sense::Le, snapshot.idle_count(i) as f64);
        }
    }
    for j in 0..n {
        if !cover_of[j].is_empty() {
            b.add_row(cover_of[j].iter().map(|&v| (v, 1.0)), Sense::Le, forecast.values[j]);
        }
    }
    let p = params.productivity;
    for i in 0..n {
        if cover_from[i].is_empty() {
            continue;
        }
        let row = cover_from[i]
            .iter()
            .map(|&v| (v, 1.0))
            .chain(out_of[i].iter().map(|&v| (v, p)))
            .chain(into[i].iter().map(|&v| (v, -p)));
        let base = snapshot.idle_count(i) as f64 + snapshot.repositioning[i] as f64 + params.alpha * snapshot.touring[i] as f64;
        b.add_row(row, Sense::Le, p * base);
    }
    Ok(FdrModel {
        model: b.seal()?,
        x_vars,
        c_vars,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub vehicle_id: VehicleId,
    pub from_area: AreaId,
    pub target: GeoPoint,
    pub target_area: AreaId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositionPlan {
    pub assignments: Vec<Assignment>,
    /// Aggregate moves (i, j, x_ij).
    pub moves: Vec<(AreaId, AreaId, u32)>,
}

impl RepositionPlan {
    pub fn empty() -> Self {
        RepositionPlan {
            assignments: Vec::new(),
            moves: Vec::new(),
        }
    }
}

/// One line of the planning audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickAudit {
    pub time: f64,
    pub status: String,
    pub objective: Option<f64>,
    pub sum_x: u32,
    pub solve_ms: f64,
    pub plan_size: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct FdrOutcome {
    pub plan: RepositionPlan,
    pub audit: TickAudit,
}

/// Solves the model for one tick and turns the moves into vehicle targets.
#[allow(clippy::too_many_arguments)]
pub fn plan_fdr(
    snapshot: &FleetSnapshot,
    forecast: &DemandForecast,
    matrix: &TravelTimeMatrix,
    params: &RepositionParams,
    inputs: &FdrInputs,
    pool: &TargetPool,
    tt: &TravelTimeProvider,
    solver: &SolverConfig,
    rng_seed: u64,
) -> FdrOutcome {
    let started = Instant::now();
    let cfg = SolverConfig {
        time_limit_s: solver.time_limit_s.min(params.interval_s / 2.0),
        ..*solver
    };
    let solved = build_fdr_model(snapshot, forecast, matrix, params, inputs)
        .and_then(|m| solve_mip(&m.model, &cfg).map(|s| (m, s)));
    let mut audit = TickAudit {
        time: snapshot.time,
        status: String::new(),
        objective: None,
        sum_x: 0,
        solve_ms: 0.0,
        plan_size: 0,
        nodes: 0,
    };
    let (fdr, sol) = match solved {
        Ok((m, s)) if s.status == Status::Optimal || (s.status == Status::NodeLimit && s.has_values()) => (m, s),
        Ok((_, s)) => {
            log::warn!("planning skipped at t={}: solver status {}", snapshot.time, s.status.as_str());
            audit.status = s.status.as_str().to_string();
            audit.nodes = s.nodes;
            audit.solve_ms = started.elapsed().as_secs_f64() * 1e3;
            return FdrOutcome {
                plan: RepositionPlan::empty(),
                audit,
            };
        }
        Err(e) => {
            log::warn!("planning skipped at t={}: {e}", snapshot.time);
            audit.status = "error".to_string();
            audit.solve_ms = started.elapsed().as_secs_f64() * 1e3;
            return FdrOutcome {
                plan: RepositionPlan::empty(),
                audit,
            };
        }
    };
    audit.status = sol.status.as_str().to_string();
    audit.objective = Some(sol.objective);
    audit.nodes = sol.nodes;
    audit.solve_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut moves = fdr.moves(&sol.values);
    moves.sort_by_key(|&(i, j, _)| (j, i));
    let plan = assign_targets(snapshot, &moves, pool, tt, rng_seed);
    audit.sum_x = moves.iter().map(|m| m.2).sum();
    audit.plan_size = plan.assignments.len();
    FdrOutcome { plan, audit }
}

/// Samples targets for each move and sends the nearest unassigned idle
/// vehicle of the source area to each one. Moves are taken in the given
/// order.
pub fn assign_targets(
    snapshot: &FleetSnapshot,
    moves: &[(AreaId, AreaId, u32)],
    pool: &TargetPool,
    tt: &TravelTimeProvider,
    rng_seed: u64,
) -> RepositionPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut taken: HashSet<VehicleId> = HashSet::new();
    let mut assignments = Vec::new();
    for &(i, j, k) in moves {
        let candidates = pool.targets(j);
        if candidates.is_empty() {
            continue;
        }
        let k = k as usize;
        let distinct = k.min(candidates.len());
        let mut picks: Vec<usize> = index::sample(&mut rng, candidates.len(), distinct).into_vec();
        while picks.len() < k {
            picks.push(rng.gen_range(0..candidates.len()));
        }
        for idx in picks {
            let target = candidates[idx];
            let best = snapshot.idle[i]
                .iter()
                .filter(|(v, _)| !taken.contains(v))
                .map(|&(v, pos)| (tt.travel_time(pos, target), v))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, v)) = best {
                taken.insert(v);
                assignments.push(Assignment {
                    vehicle_id: v,
                    from_area: i,
                    target,
                    target_area: j,
                });
            }
        }
    }
    RepositionPlan {
        assignments,
        moves: moves.to_vec(),
    }
}

/// Nearest idle vehicle to a rejected pickup, ties by lowest id.
pub fn react_on_rejection(
    pickup: GeoPoint,
    idle: impl IntoIterator<Item = (VehicleId, GeoPoint)>,
    tt: &TravelTimeProvider,
) -> Option<VehicleId> {
    idle.into_iter()
        .map(|(v, pos)| (tt.travel_time(pos, pickup), v))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, v)| v)
}
