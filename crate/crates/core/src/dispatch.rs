//! Cheapest feasible insertion of requests into vehicle routes.

use serde::{Deserialize, Serialize};

use crate::demand::TripRequest;
use crate::geo::{GeoPoint, TravelTimeProvider};

pub type VehicleId = usize;

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub kind: StopKind,
    pub request_id: u64,
    pub location: GeoPoint,
    pub passengers: u32,
    pub planned_arrival: f64,
    pub dwell_s: f64,
    /// Latest arrival at a pickup; infinite for dropoffs.
    pub deadline: f64,
    /// Ride-time limit of the request, pickup departure to dropoff arrival.
    pub max_ride_s: f64,
    /// Set on a dropoff once its pickup has been served.
    pub pickup_departure: Option<f64>,
}

/// Where and when the vehicle can begin its remaining stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteStart {
    pub location: GeoPoint,
    pub time: f64,
    pub onboard: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub stops: Vec<Stop>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchParams {
    pub capacity: u32,
    pub max_wait_s: f64,
    pub ride_factor: f64,
    pub ride_buffer_s: f64,
    pub dwell_s: f64,
}

impl Default for DispatchParams {
    fn default() -> Self {
        DispatchParams {
            capacity: 4,
            max_wait_s: 240.0,
            ride_factor: 1.5,
            ride_buffer_s: 300.0,
            dwell_s: 30.0,
        }
    }
}

impl DispatchParams {
    pub fn ride_limit(&self, direct_s: f64) -> f64 {
        self.ride_factor * direct_s + self.ride_buffer_s
    }
}

/// Best insertion into one route. The pickup lands at `pickup_index` of the
/// new stop list; the dropoff goes before original stop `dropoff_index`
/// (`dropoff_index >= pickup_index`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Insertion {
    pub pickup_index: usize,
    pub dropoff_index: usize,
    pub delta_cost_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertionResult {
    pub accepted: bool,
    pub vehicle_id: Option<VehicleId>,
    pub insertion: Option<Insertion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Capacity { stop: usize },
    PickupDeadline { stop: usize },
    RideTime { stop: usize },
    Unordered { stop: usize },
}

pub fn direct_time(req: &TripRequest, tt: &TravelTimeProvider) -> f64 {
    tt.travel_time(req.origin, req.destination)
}

/// Walks `stops` from `start`, returning the departure time after the last
/// stop or the first violated constraint.
fn walk<'a>(
    start: &RouteStart,
    stops: impl Iterator<Item = &'a Stop>,
    capacity: u32,
    tt: &TravelTimeProvider,
) -> Result<f64, Violation> {
    let mut pos = start.location;
    let mut clock = start.time;
    let mut load = start.onboard as i64;
    // pickup departures seen so far, by request id
    let mut departures: Vec<(u64, f64)> = Vec::new();
    for (k, s) in stops.enumerate() {
        let arrival = clock + tt.travel_time(pos, s.location);
        match s.kind {
            StopKind::Pickup => {
                if arrival > s.deadline + EPS {
                    return Err(Violation::PickupDeadline { stop: k });
                }
                load += s.passengers as i64;
                if load > capacity as i64 {
                    return Err(Violation::Capacity { stop: k });
                }
                departures.push((s.request_id, arrival + s.dwell_s));
            }
            StopKind::Dropoff => {
                let picked = s
                    .pickup_departure
                    .or_else(|| departures.iter().find(|e| e.0 == s.request_id).map(|e| e.1));
                let Some(dep) = picked else {
                    return Err(Violation::Unordered { stop: k });
                };
                if arrival - dep > s.max_ride_s + EPS {
                    return Err(Violation::RideTime { stop: k });
                }
                load -= s.passengers as i64;
                if load < 0 {
                    return Err(Violation::Unordered { stop: k });
                }
            }
        }
        clock = arrival + s.dwell_s;
        pos = s.location;
    }
    Ok(clock)
}

impl Route {
    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Passengers on board after each stop.
    pub fn onboard_after(&self, start_onboard: u32) -> Vec<u32> {
        let mut load = start_onboard as i64;
        self.stops
            .iter()
            .map(|s| {
                load += match s.kind {
                    StopKind::Pickup => s.passengers as i64,
                    StopKind::Dropoff => -(s.passengers as i64),
                };
                load.max(0) as u32
            })
            .collect()
    }

    /// Checks every constraint from `start` and returns the final departure.
    pub fn check(&self, start: &RouteStart, capacity: u32, tt: &TravelTimeProvider) -> Result<f64, Violation> {
        walk(start, self.stops.iter(), capacity, tt)
    }

    /// Recomputes planned arrivals from `start`.
    pub fn retime(&mut self, start: &RouteStart, tt: &TravelTimeProvider) {
        let mut pos = start.location;
        let mut clock = start.time;
        for s in &mut self.stops {
            s.planned_arrival = clock + tt.travel_time(pos, s.location);
            clock = s.planned_arrival + s.dwell_s;
            pos = s.location;
        }
    }

    pub fn end_time(&self, start: &RouteStart, tt: &TravelTimeProvider) -> f64 {
        let mut pos = start.location;
        let mut clock = start.time;
        for s in &self.stops {
            clock += tt.travel_time(pos, s.location) + s.dwell_s;
            pos = s.location;
        }
        clock
    }

    /// Inserts the pickup/dropoff pair of `req` and retimes the route.
    pub fn apply(
        &mut self,
        ins: &Insertion,
        req: &TripRequest,
        params: &DispatchParams,
        start: &RouteStart,
        tt: &TravelTimeProvider,
    ) {
        let (p, d) = request_stops(req, params, tt);
        self.stops.insert(ins.dropoff_index, d);
        self.stops.insert(ins.pickup_index, p);
        self.retime(start, tt);
    }
}

/// The pickup and dropoff stops a request contributes.
pub fn request_stops(req: &TripRequest, params: &DispatchParams, tt: &TravelTimeProvider) -> (Stop, Stop) {
    let max_ride_s = params.ride_limit(direct_time(req, tt));
    let pickup = Stop {
        kind: StopKind::Pickup,
        request_id: req.id,
        location: req.origin,
        passengers: req.passengers,
        planned_arrival: f64::NAN,
        dwell_s: params.dwell_s,
        deadline: req.request_time + params.max_wait_s,
        max_ride_s,
        pickup_departure: None,
    };
    let dropoff = Stop {
        kind: StopKind::Dropoff,
        location: req.destination,
        deadline: f64::INFINITY,
        ..pickup.clone()
    };
    (pickup, dropoff)
}

/// Cheapest feasible insertion of `req` into `route`, or `None`.
pub fn try_insert(
    route: &Route,
    start: &RouteStart,
    req: &TripRequest,
    params: &DispatchParams,
    tt: &TravelTimeProvider,
) -> Option<Insertion> {
    if req.passengers > params.capacity {
        return None;
    }
    let (p, d) = request_stops(req, params, tt);
    let base = route.end_time(start, tt);
    let n = route.stops.len();
    let mut best: Option<Insertion> = None;
    for i in 0..=n {
        for j in i..=n {
            // new list: stops[..i], P, stops[i..j], D, stops[j..]
            let seq = route.stops[..i]
                .iter()
                .chain(std::iter::once(&p))
                .chain(&route.stops[i..j])
                .chain(std::iter::once(&d))
                .chain(&route.stops[j..]);
            if let Ok(end) = walk(start, seq, params.capacity, tt) {
                let delta = end - base;
                if best.map_or(true, |b| delta < b.delta_cost_s) {
                    best = Some(Insertion {
                        pickup_index: i,
                        dropoff_index: j,
                        delta_cost_s: delta,
                    });
                }
            }
        }
    }
    best
}

/// A dispatch candidate: vehicle id, where its route starts, and the route.
pub struct Candidate<'a> {
    pub vehicle_id: VehicleId,
    pub start: RouteStart,
    pub route: &'a Route,
}

/// Globally cheapest insertion across all candidates; ties go to the lowest
/// vehicle id.
pub fn dispatch<'a>(
    candidates: impl IntoIterator<Item = Candidate<'a>>,
    req: &TripRequest,
    params: &DispatchParams,
    tt: &TravelTimeProvider,
) -> InsertionResult {
    let mut best: Option<(f64, VehicleId, Insertion)> = None;
    for c in candidates {
        if c.route.is_empty() && c.start.time + tt.travel_time(c.start.location, req.origin) > req.request_time + params.max_wait_s + EPS {
            continue;
        }
        if let Some(ins) = try_insert(c.route, &c.start, req, params, tt) {
            let better = match best {
                None => true,
                Some((cost, vid, _)) => ins.delta_cost_s < cost || (ins.delta_cost_s == cost && c.vehicle_id < vid),
            };
            if better {
                best = Some((ins.delta_cost_s, c.vehicle_id, ins));
            }
        }
    }
    match best {
        Some((_, vid, ins)) => InsertionResult {
            accepted: true,
            vehicle_id: Some(vid),
            insertion: Some(ins),
        },
        None => InsertionResult {
            accepted: false,
            vehicle_id: None,
            insertion: None,
        },
    }
}
