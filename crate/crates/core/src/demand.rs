//! Trip request ingestion and per-area demand forecasts.

use std::collections::VecDeque;
use std::io::Read;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::geo::{haversine_m, AreaId, GeoPoint, Grid};

pub const TRIP_HEADER: [&str; 6] = [
    "request_time",
    "pickup_lat",
    "pickup_lon",
    "dropoff_lat",
    "dropoff_lon",
    "passengers",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: u64,
    /// Seconds since the Unix epoch.
    pub request_time: f64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub passengers: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum DemandError {
    #[error("trip file header {found:?} does not match {TRIP_HEADER:?}")]
    Header { found: Vec<String> },
    #[error("trip csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPolicy {
    /// Records with either endpoint outside this box are dropped.
    pub sanity_bbox: Option<(GeoPoint, GeoPoint)>,
    /// Half-open `[start, end)` window on request_time.
    pub window: Option<(f64, f64)>,
}

impl FilterPolicy {
    pub fn accept_all() -> Self {
        FilterPolicy {
            sanity_bbox: None,
            window: None,
        }
    }

    /// Expands `(min, max)` by `margin_m` on every side.
    pub fn expanded_bbox(min: GeoPoint, max: GeoPoint, margin_m: f64) -> (GeoPoint, GeoPoint) {
        let dlat = margin_m / haversine_m(GeoPoint::new(0.0, 0.0), GeoPoint::new(1.0, 0.0));
        let lat_ref = min.lat.abs().max(max.lat.abs()).min(89.0);
        let dlon = dlat / lat_ref.to_radians().cos();
        (
            GeoPoint::new((min.lat - dlat).max(-90.0), (min.lon - dlon).max(-180.0)),
            GeoPoint::new((max.lat + dlat).min(90.0), (max.lon + dlon).min(180.0)),
        )
    }

    fn inside(&self, p: GeoPoint) -> bool {
        match self.sanity_bbox {
            Some((lo, hi)) => (lo.lat..=hi.lat).contains(&p.lat) && (lo.lon..=hi.lon).contains(&p.lon),
            None => true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropTally {
    pub malformed: u64,
    pub zero_passengers: u64,
    pub same_location: u64,
    pub outside_bbox: u64,
    pub outside_window: u64,
}

impl DropTally {
    pub fn total(&self) -> u64 {
        self.malformed + self.zero_passengers + self.same_location + self.outside_bbox + self.outside_window
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTrips {
    pub requests: Vec<TripRequest>,
    pub dropped: DropTally,
}

pub fn parse_time(s: &str) -> Option<f64> {
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs as f64);
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|t| t.and_utc().timestamp() as f64)
}

/// Reads the trip CSV, drops bad records and returns requests sorted by time.
/// Ids are assigned in sorted order; equal timestamps keep file order.
pub fn parse_requests<R: Read>(source: R, filter: &FilterPolicy) -> Result<ParsedTrips, DemandError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRIP_HEADER {
        return Err(DemandError::Header { found: header });
    }
    let mut dropped = DropTally::default();
    let mut requests = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) if r.len() == TRIP_HEADER.len() => r,
            Ok(_) | Err(_) => {
                dropped.malformed += 1;
                continue;
            }
        };
        let coord = |k: usize| rec[k].parse::<f64>().ok().filter(|v| v.is_finite());
        let parsed = (|| {
            let t = parse_time(&rec[0])?;
            let origin = GeoPoint::new(coord(1)?, coord(2)?);
            let destination = GeoPoint::new(coord(3)?, coord(4)?);
            let passengers = rec[5].parse::<u32>().ok()?;
            (origin.is_valid() && destination.is_valid()).then_some((t, origin, destination, passengers))
        })();
        let Some((t, origin, destination, passengers)) = parsed else {
            dropped.malformed += 1;
            continue;
        };
        if passengers == 0 {
            dropped.zero_passengers += 1;
        } else if origin == destination {
            dropped.same_location += 1;
        } else if !filter.inside(origin) || !filter.inside(destination) {
            dropped.outside_bbox += 1;
        } else if filter.window.is_some_and(|(lo, hi)| t < lo || t >= hi) {
            dropped.outside_window += 1;
        } else {
            requests.push(TripRequest {
                id: 0,
                request_time: t,
                origin,
                destination,
                passengers,
            });
        }
    }
    requests.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));
    for (k, r) in requests.iter_mut().enumerate() {
        r.id = k as u64;
    }
    Ok(ParsedTrips { requests, dropped })
}

pub fn write_requests<W: std::io::Write>(requests: &[TripRequest], w: W) -> Result<(), DemandError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRIP_HEADER)?;
    for r in requests {
        wtr.write_record([
            format!("{}", r.request_time as i64),
            r.origin.lat.to_string(),
            r.origin.lon.to_string(),
            r.destination.lat.to_string(),
            r.destination.lon.to_string(),
            r.passengers.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandForecast {
    pub values: Vec<f64>,
    pub horizon_s: f64,
    pub issued_at: f64,
}

impl DemandForecast {
    pub fn zero(n_areas: usize, issued_at: f64, horizon_s: f64) -> Self {
        DemandForecast {
            values: vec![0.0; n_areas],
            horizon_s,
            issued_at,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Time-ordered (request_time, origin area) observations.
#[derive(Debug, Clone)]
pub struct RequestHistory {
    retention_s: f64,
    obs: VecDeque<(f64, AreaId)>,
}

impl RequestHistory {
    pub fn new(retention_s: f64) -> Self {
        RequestHistory {
            retention_s,
            obs: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, time: f64, area: AreaId) {
        debug_assert!(self.obs.back().map_or(true, |&(t, _)| t <= time));
        self.obs.push_back((time, area));
        while let Some(&(t, _)) = self.obs.front() {
            if t < time - self.retention_s {
                self.obs.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, AreaId)> {
        self.obs.iter()
    }
}

/// Demand over `[now, now + h)` predicted as the count observed in `[now - h, now)`.
pub fn naive_forecast(history: &RequestHistory, n_areas: usize, now: f64, h: f64) -> DemandForecast {
    let mut fc = DemandForecast::zero(n_areas, now, h);
    let start = now - h;
    let first = history.obs.partition_point(|&(t, _)| t < start);
    for &(t, a) in history.obs.range(first..) {
        if t >= now {
            break;
        }
        fc.values[a] += 1.0;
    }
    fc
}

/// Exact count of requests in `[now, now + h)`. `future` must be sorted by time.
pub fn perfect_forecast(future: &[TripRequest], grid: &Grid, now: f64, h: f64) -> DemandForecast {
    let mut fc = DemandForecast::zero(grid.num_areas(), now, h);
    let first = future.partition_point(|r| r.request_time < now);
    for r in &future[first..] {
        if r.request_time >= now + h {
            break;
        }
        fc.values[grid.locate(r.origin)] += 1.0;
    }
    fc
}
