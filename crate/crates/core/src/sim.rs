//! Discrete-event replay of a request stream against a simulated fleet.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use fleetsim_mip::SolverConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{naive_forecast, perfect_forecast, RequestHistory, TripRequest};
use crate::dispatch::{dispatch, Candidate, DispatchParams, Route, RouteStart, StopKind, VehicleId};
use crate::geo::{build_area_matrix, AreaId, GeoPoint, Grid, TravelTimeMatrix, TravelTimeProvider};
use crate::metrics::{Accumulator, KpiReport, RequestOutcome, SeriesRow};
use crate::reposition::{
    plan_fdr, react_on_rejection, update_target_pool, FdrInputs, FleetSnapshot, RepositionParams, TargetPool,
    TickAudit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    None,
    React,
    Fdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastKind {
    Perfect,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Touring,
    Repositioning,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub forecast: Option<ForecastKind>,
    pub fleet_size: usize,
    pub dispatch: DispatchParams,
    pub reposition: RepositionParams,
    pub solver: SolverConfig,
    /// Start of the warm-up period.
    pub sim_start: f64,
    pub warmup_s: f64,
    pub duration_s: f64,
    pub position_update_s: f64,
    pub seed: u64,
    /// Keep a log of every phase change.
    pub record_transitions: bool,
}

impl SimConfig {
    pub fn day_start(&self) -> f64 {
        self.sim_start + self.warmup_s
    }

    pub fn end(&self) -> f64 {
        self.day_start() + self.duration_s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.mode == Mode::Fdr && self.forecast.is_none() {
            return Err(SimError::Config("fdr mode needs a forecast provider".into()));
        }
        if !(self.position_update_s > 0.0) {
            return Err(SimError::Config("position update period must be positive".into()));
        }
        if !(self.warmup_s >= 0.0 && self.duration_s >= 0.0) {
            return Err(SimError::Config("warm-up and duration must be non-negative".into()));
        }
        self.reposition
            .validate()
            .map_err(|(k, msg)| SimError::Config(format!("{k}: {msg}")))
    }

    /// Tick instants: every interval from the warm-up start until the end of day.
    pub fn tick_count(&self) -> usize {
        if self.mode != Mode::Fdr {
            return 0;
        }
        let span = self.warmup_s + self.duration_s;
        (span / self.reposition.interval_s).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub vehicle: VehicleId,
    pub from: Phase,
    pub to: Phase,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: KpiReport,
    pub audit: Vec<TickAudit>,
    /// Post-warm-up outcomes in request order.
    pub outcomes: Vec<RequestOutcome>,
    pub transitions: Vec<Transition>,
    pub initial_positions: Vec<GeoPoint>,
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    from: GeoPoint,
    to: GeoPoint,
    start: f64,
    end: f64,
}

impl Leg {
    fn position(&self, t: f64) -> GeoPoint {
        if self.end <= self.start {
            return self.to;
        }
        self.from.lerp(self.to, ((t - self.start) / (self.end - self.start)).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone)]
struct Vehicle {
    phase: Phase,
    route: Route,
    onboard: u32,
    /// Position when not moving.
    location: GeoPoint,
    leg: Option<Leg>,
    dwell_until: Option<f64>,
    target: Option<(GeoPoint, AreaId)>,
    /// Last position reported to the planner.
    reported: GeoPoint,
    version: u64,
}

impl Vehicle {
    fn position(&self, t: f64) -> GeoPoint {
        self.leg.map_or(self.location, |l| l.position(t))
    }

    fn route_start(&self, now: f64) -> RouteStart {
        match self.dwell_until {
            Some(until) => RouteStart {
                location: self.location,
                time: until,
                onboard: self.onboard,
            },
            None => RouteStart {
                location: self.position(now),
                time: now,
                onboard: self.onboard,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    StopArrival { v: VehicleId, version: u64 },
    StopDeparture { v: VehicleId, version: u64 },
    RepositionArrival { v: VehicleId, version: u64 },
    PositionUpdate,
    RequestArrival { index: usize },
    RepositionTick { index: u64 },
    MinuteSample { minute: u32 },
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::StopArrival { .. } => 0,
            EventKind::StopDeparture { .. } => 1,
            EventKind::RepositionArrival { .. } => 2,
            EventKind::PositionUpdate => 3,
            EventKind::RequestArrival { .. } => 4,
            EventKind::RepositionTick { .. } => 5,
            EventKind::MinuteSample { .. } => 6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.priority(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

pub struct Simulation<'a> {
    cfg: SimConfig,
    requests: &'a [TripRequest],
    grid: &'a Grid,
    tt: &'a TravelTimeProvider,
    matrix: Option<TravelTimeMatrix>,
    inputs: Option<FdrInputs>,
    clock: f64,
    queue: BinaryHeap<Event>,
    seq: u64,
    fleet: Vec<Vehicle>,
    history: RequestHistory,
    pool: TargetPool,
    outcomes: Vec<RequestOutcome>,
    index_of: HashMap<u64, usize>,
    acc: Accumulator,
    audit: Vec<TickAudit>,
    transitions: Vec<Transition>,
    initial: Option<Vec<GeoPoint>>,
}

impl<'a> Simulation<'a> {
    /// `requests` must be sorted by request time. The area matrix is built
    /// from `tt` when FDR mode needs one and none is given.
    pub fn new(
        cfg: SimConfig,
        requests: &'a [TripRequest],
        grid: &'a Grid,
        tt: &'a TravelTimeProvider,
        matrix: Option<TravelTimeMatrix>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if requests.windows(2).any(|w| w[0].request_time > w[1].request_time) {
            return Err(SimError::Config("requests must be sorted by time".into()));
        }
        let matrix = match (cfg.mode, matrix) {
            (Mode::Fdr, None) => Some(build_area_matrix(grid, tt)),
            (_, m) => m,
        };
        if let Some(m) = &matrix {
            if m.num_areas() != grid.num_areas() {
                return Err(SimError::Config(format!(
                    "travel matrix has {} areas, grid has {}",
                    m.num_areas(),
                    grid.num_areas()
                )));
            }
        }
        let acc = Accumulator::new(cfg.day_start(), cfg.fleet_size as u32);
        let history = RequestHistory::new(cfg.reposition.horizon_s);
        Ok(Simulation {
            clock: cfg.sim_start,
            requests,
            grid,
            tt,
            inputs: None,
            matrix,
            queue: BinaryHeap::new(),
            seq: 0,
            fleet: Vec::new(),
            history,
            pool: TargetPool::new(grid.num_areas()),
            outcomes: Vec::new(),
            index_of: HashMap::new(),
            acc,
            audit: Vec::new(),
            transitions: Vec::new(),
            initial: None,
            cfg,
        })
    }

    /// Replaces the seeded placement; the length must match the fleet size.
    pub fn with_initial_positions(mut self, positions: Vec<GeoPoint>) -> Result<Self, SimError> {
        if positions.len() != self.cfg.fleet_size {
            return Err(SimError::Config(format!(
                "{} initial positions for a fleet of {}",
                positions.len(),
                self.cfg.fleet_size
            )));
        }
        self.initial = Some(positions);
        Ok(self)
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { time, seq: self.seq, kind });
    }

    fn set_phase(&mut self, v: VehicleId, to: Phase) {
        let from = self.fleet[v].phase;
        if from == to {
            return;
        }
        debug_assert!(
            matches!(
                (from, to),
                (Phase::Idle, _) | (Phase::Repositioning, _) | (Phase::Touring, Phase::Idle)
            ),
            "illegal transition {from:?} -> {to:?}"
        );
        self.fleet[v].phase = to;
        if self.cfg.record_transitions {
            self.transitions.push(Transition {
                time: self.clock,
                vehicle: v,
                from,
                to,
            });
        }
    }

    fn place_fleet(&mut self) -> Vec<GeoPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let first_hour = self.cfg.sim_start + 3600.0;
        let mut origins: Vec<GeoPoint> = self
            .requests
            .iter()
            .filter(|r| r.request_time >= self.cfg.sim_start && r.request_time < first_hour)
            .map(|r| r.origin)
            .collect();
        if origins.is_empty() {
            origins = self.requests.iter().map(|r| r.origin).collect();
        }
        (0..self.cfg.fleet_size)
            .map(|_| {
                if origins.is_empty() {
                    self.grid.area_center(rng.gen_range(0..self.grid.num_areas()))
                } else {
                    origins[rng.gen_range(0..origins.len())]
                }
            })
            .collect()
    }

    pub fn run(mut self) -> SimOutput {
        let initial = match self.initial.take() {
            Some(p) => p,
            None => self.place_fleet(),
        };
        self.fleet = initial
            .iter()
            .map(|&p| Vehicle {
                phase: Phase::Idle,
                route: Route::default(),
                onboard: 0,
                location: p,
                leg: None,
                dwell_until: None,
                target: None,
                reported: p,
                version: 0,
            })
            .collect();

        let (start, day_start, end) = (self.cfg.sim_start, self.cfg.day_start(), self.cfg.end());
        for (k, r) in self.requests.iter().enumerate() {
            if r.request_time >= start && r.request_time < end {
                self.index_of.insert(r.id, self.outcomes.len());
                self.outcomes.push(RequestOutcome {
                    request_id: r.id,
                    request_time: r.request_time,
                    accepted: false,
                    vehicle_id: None,
                    pickup_time: None,
                    dropoff_time: None,
                });
                self.push(r.request_time, EventKind::RequestArrival { index: k });
            }
        }
        let minutes = (self.cfg.duration_s / 60.0).ceil() as u32;
        for m in 0..minutes {
            self.push(day_start + 60.0 * m as f64, EventKind::MinuteSample { minute: m });
        }
        if start < end {
            self.push(start, EventKind::PositionUpdate);
            if self.cfg.mode == Mode::Fdr {
                self.push(start, EventKind::RepositionTick { index: 0 });
            }
        }

        while let Some(ev) = self.queue.pop() {
            assert!(ev.time >= self.clock, "event at {} popped after {}", ev.time, self.clock);
            self.clock = ev.time;
            match ev.kind {
                EventKind::StopArrival { v, version } if self.fleet[v].version == version => self.stop_arrival(v),
                EventKind::StopDeparture { v, version } if self.fleet[v].version == version => self.stop_departure(v),
                EventKind::RepositionArrival { v, version } if self.fleet[v].version == version => {
                    self.reposition_arrival(v)
                }
                EventKind::PositionUpdate => {
                    let now = self.clock;
                    for veh in &mut self.fleet {
                        veh.reported = veh.position(now);
                    }
                    let next = now + self.cfg.position_update_s;
                    if next < end {
                        self.push(next, EventKind::PositionUpdate);
                    }
                }
                EventKind::RequestArrival { index } => self.handle_request(index),
                EventKind::RepositionTick { index } => {
                    self.reposition_tick(index);
                    let next = start + (index + 1) as f64 * self.cfg.reposition.interval_s;
                    if next < end {
                        self.push(next, EventKind::RepositionTick { index: index + 1 });
                    }
                }
                EventKind::MinuteSample { minute } => {
                    let mut row = SeriesRow {
                        minute,
                        idle: 0,
                        touring: 0,
                        repositioning: 0,
                        requests: 0,
                        rejections: 0,
                    };
                    for veh in &self.fleet {
                        match veh.phase {
                            Phase::Idle => row.idle += 1,
                            Phase::Touring => row.touring += 1,
                            Phase::Repositioning => row.repositioning += 1,
                        }
                    }
                    self.acc.record_sample(row);
                }
                _ => {}
            }
        }

        for o in std::mem::take(&mut self.outcomes) {
            self.acc.record_outcome(o);
        }
        self.acc.tally_series(day_start);
        let outcomes = self.acc.outcomes().to_vec();
        SimOutput {
            report: self.acc.finalize(),
            audit: self.audit,
            outcomes,
            transitions: self.transitions,
            initial_positions: initial,
        }
    }

    /// Ends the current leg at the clock, crediting the driven time.
    fn interrupt_leg(&mut self, v: VehicleId) {
        let now = self.clock;
        let repositioning = self.fleet[v].phase == Phase::Repositioning;
        if let Some(leg) = self.fleet[v].leg.take() {
            self.acc.record_travel(leg.start, now, repositioning);
            self.fleet[v].location = leg.position(now);
        }
    }

    /// Starts driving to the route head, arriving at its planned time.
    fn drive_to_head(&mut self, v: VehicleId) {
        let now = self.clock;
        let veh = &mut self.fleet[v];
        let head = &veh.route.stops[0];
        veh.leg = Some(Leg {
            from: veh.location,
            to: head.location,
            start: now,
            end: head.planned_arrival,
        });
        veh.version += 1;
        let (t, version) = (head.planned_arrival, veh.version);
        self.push(t, EventKind::StopArrival { v, version });
    }

    fn handle_request(&mut self, index: usize) {
        let req = &self.requests[index];
        let now = self.clock;
        let origin_area = self.grid.locate(req.origin);
        self.history.observe(now, origin_area);
        update_target_pool(&mut self.pool, req.origin, self.grid);

        let starts: Vec<RouteStart> = self.fleet.iter().map(|veh| veh.route_start(now)).collect();
        let result = dispatch(
            self.fleet.iter().zip(&starts).enumerate().map(|(k, (veh, s))| Candidate {
                vehicle_id: k,
                start: *s,
                route: &veh.route,
            }),
            req,
            &self.cfg.dispatch,
            self.tt,
        );
        let slot = self.index_of[&req.id];
        match (result.vehicle_id, result.insertion) {
            (Some(v), Some(ins)) if result.accepted => {
                self.outcomes[slot].accepted = true;
                self.outcomes[slot].vehicle_id = Some(v);
                let dwelling = self.fleet[v].dwell_until.is_some();
                if !dwelling {
                    self.interrupt_leg(v);
                }
                let start = self.fleet[v].route_start(now);
                let params = self.cfg.dispatch.clone();
                self.fleet[v].route.apply(&ins, req, &params, &start, self.tt);
                self.fleet[v].target = None;
                self.set_phase(v, Phase::Touring);
                if !dwelling {
                    self.drive_to_head(v);
                }
                self.fleet[v].reported = self.fleet[v].position(now);
            }
            _ => {
                if self.cfg.mode == Mode::React {
                    let pickup = req.origin;
                    let idle = self
                        .fleet
                        .iter()
                        .enumerate()
                        .filter(|(_, veh)| veh.phase == Phase::Idle)
                        .map(|(k, veh)| (k, veh.location));
                    if let Some(v) = react_on_rejection(pickup, idle, self.tt) {
                        let area = self.grid.locate(pickup);
                        self.start_repositioning(v, pickup, area);
                    }
                }
            }
        }
    }

    fn start_repositioning(&mut self, v: VehicleId, target: GeoPoint, area: AreaId) {
        let now = self.clock;
        let veh = &mut self.fleet[v];
        let arrival = now + self.tt.travel_time(veh.location, target);
        veh.leg = Some(Leg {
            from: veh.location,
            to: target,
            start: now,
            end: arrival,
        });
        veh.target = Some((target, area));
        veh.version += 1;
        let version = veh.version;
        self.set_phase(v, Phase::Repositioning);
        self.push(arrival, EventKind::RepositionArrival { v, version });
    }

    fn reposition_arrival(&mut self, v: VehicleId) {
        self.interrupt_leg(v);
        let veh = &mut self.fleet[v];
        if let Some((target, _)) = veh.target.take() {
            veh.location = target;
        }
        veh.reported = veh.location;
        self.set_phase(v, Phase::Idle);
    }

    fn stop_arrival(&mut self, v: VehicleId) {
        let now = self.clock;
        self.interrupt_leg(v);
        let veh = &mut self.fleet[v];
        let stop = veh.route.stops.remove(0);
        veh.location = stop.location;
        veh.reported = stop.location;
        let slot = self.index_of[&stop.request_id];
        match stop.kind {
            StopKind::Pickup => {
                veh.onboard += stop.passengers;
                let departure = now + stop.dwell_s;
                if let Some(d) = veh
                    .route
                    .stops
                    .iter_mut()
                    .find(|s| s.kind == StopKind::Dropoff && s.request_id == stop.request_id)
                {
                    d.pickup_departure = Some(departure);
                }
                self.outcomes[slot].pickup_time = Some(now);
            }
            StopKind::Dropoff => {
                veh.onboard -= stop.passengers;
                self.outcomes[slot].dropoff_time = Some(now);
            }
        }
        let until = now + stop.dwell_s;
        veh.dwell_until = Some(until);
        let version = veh.version;
        self.push(until, EventKind::StopDeparture { v, version });
    }

    fn stop_departure(&mut self, v: VehicleId) {
        self.fleet[v].dwell_until = None;
        if self.fleet[v].route.is_empty() {
            self.set_phase(v, Phase::Idle);
        } else {
            self.drive_to_head(v);
        }
    }

    fn reposition_tick(&mut self, index: u64) {
        let now = self.clock;
        let n = self.grid.num_areas();
        let matrix = self.matrix.as_ref().expect("fdr mode has a matrix");
        let mut snapshot = FleetSnapshot::empty(n, now);
        for (k, veh) in self.fleet.iter().enumerate() {
            match veh.phase {
                Phase::Idle => snapshot.idle[self.grid.locate(veh.location)].push((k, veh.location)),
                Phase::Touring => snapshot.touring[self.grid.locate(veh.reported)] += 1,
                Phase::Repositioning => {
                    let a = veh.target.map_or_else(|| self.grid.locate(veh.reported), |t| t.1);
                    snapshot.repositioning[a] += 1;
                }
            }
        }
        let h = self.cfg.reposition.horizon_s;
        let forecast = match self.cfg.forecast.expect("validated") {
            ForecastKind::Perfect => perfect_forecast(self.requests, self.grid, now, h),
            ForecastKind::Naive => naive_forecast(&self.history, n, now, h),
        };
        let coverage_s = self.cfg.reposition.coverage_s;
        let inputs = self
            .inputs
            .get_or_insert_with(|| FdrInputs::new(matrix, coverage_s, vec![true; n]));
        for (a, valid) in inputs.valid_target.iter_mut().enumerate() {
            *valid = self.pool.is_valid_target(a);
        }
        let seed = self
            .cfg
            .seed
            .wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let outcome = plan_fdr(
            &snapshot,
            &forecast,
            matrix,
            &self.cfg.reposition,
            inputs,
            &self.pool,
            self.tt,
            &self.cfg.solver,
            seed,
        );
        for a in &outcome.plan.assignments {
            self.start_repositioning(a.vehicle_id, a.target, a.target_area);
        }
        self.audit.push(outcome.audit);
    }
}

/// Convenience wrapper around [`Simulation`].
pub fn simulate(
    cfg: SimConfig,
    requests: &[TripRequest],
    grid: &Grid,
    tt: &TravelTimeProvider,
    matrix: Option<TravelTimeMatrix>,
) -> Result<SimOutput, SimError> {
    Ok(Simulation::new(cfg, requests, grid, tt, matrix)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_m;

    #[test]
    fn leg_midpoint_by_time() {
        let leg = Leg {
            from: GeoPoint::new(40.0, -74.0),
            to: GeoPoint::new(40.02, -73.96),
            start: 100.0,
            end: 300.0,
        };
        let mid = leg.position(200.0);
        assert!((mid.lat - 40.01).abs() < 1e-12 && (mid.lon + 73.98).abs() < 1e-12);
        assert_eq!(leg.position(50.0), leg.from);
        assert_eq!(leg.position(400.0), leg.to);
    }

    #[test]
    fn sampled_distance_matches_leg_time() {
        let tt = TravelTimeProvider::constant_speed(10.0);
        let (a, b) = (GeoPoint::new(53.55, 9.99), GeoPoint::new(53.60, 10.05));
        let dur = tt.travel_time(a, b);
        let leg = Leg {
            from: a,
            to: b,
            start: 0.0,
            end: dur,
        };
        let mut t = 0.0;
        let mut driven = 0.0;
        let mut last = a;
        while t < dur + 30.0 {
            t += 30.0;
            let p = leg.position(t);
            driven += haversine_m(last, p) / 10.0;
            last = p;
        }
        assert!((driven - dur).abs() < 30.0, "{driven} vs {dur}");
        assert!((driven - dur).abs() < 1e-3 * dur);
    }

    #[test]
    fn events_pop_by_time_then_priority_then_sequence() {
        let mut q = BinaryHeap::new();
        let ev = |time, seq, kind| Event { time, seq, kind };
        q.push(ev(5.0, 1, EventKind::RepositionTick { index: 0 }));
        q.push(ev(5.0, 2, EventKind::RequestArrival { index: 0 }));
        q.push(ev(5.0, 3, EventKind::StopArrival { v: 0, version: 0 }));
        q.push(ev(4.0, 4, EventKind::MinuteSample { minute: 0 }));
        q.push(ev(5.0, 5, EventKind::RequestArrival { index: 1 }));
        let order: Vec<u64> = std::iter::from_fn(|| q.pop().map(|e| e.seq)).collect();
        assert_eq!(order, vec![4, 3, 2, 5, 1]);
    }
}
