//! Synthetic request streams: Poisson arrivals around demand clusters in a
//! square service area.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::demand::TripRequest;
use crate::geo::{GeoPoint, Grid, METERS_PER_DEGREE};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Centre in metres from the south-west corner.
    pub x_m: f64,
    pub y_m: f64,
    pub sigma_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub min_corner: GeoPoint,
    pub side_m: f64,
    pub clusters: Vec<Cluster>,
    /// Arrival rate of the active cluster(s), requests per hour in total.
    pub cluster_rate_per_h: f64,
    /// Uniform background rate, requests per hour.
    pub background_rate_per_h: f64,
    /// Clusters take turns for this long each. `None` keeps every cluster
    /// active at an equal share of the rate.
    pub switch_s: Option<f64>,
    pub start: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl SynthParams {
    /// Two clusters in opposite quadrants of a 10 km square.
    pub fn two_clusters(start: f64, duration_s: f64, seed: u64) -> Self {
        SynthParams {
            min_corner: GeoPoint::new(53.50, 9.90),
            side_m: 10_000.0,
            clusters: vec![
                Cluster {
                    x_m: 2_500.0,
                    y_m: 2_500.0,
                    sigma_m: 700.0,
                },
                Cluster {
                    x_m: 7_500.0,
                    y_m: 7_500.0,
                    sigma_m: 700.0,
                },
            ],
            cluster_rate_per_h: 120.0,
            background_rate_per_h: 20.0,
            switch_s: Some(7_200.0),
            start,
            duration_s,
            seed,
        }
    }

    pub fn max_corner(&self) -> GeoPoint {
        let dlat = self.side_m / METERS_PER_DEGREE;
        let mid = (self.min_corner.lat + dlat / 2.0).to_radians();
        GeoPoint::new(
            self.min_corner.lat + dlat,
            self.min_corner.lon + self.side_m / (METERS_PER_DEGREE * mid.cos()),
        )
    }

    pub fn grid(&self, cell_size_m: f64) -> Grid {
        Grid::build(self.min_corner, self.max_corner(), cell_size_m).expect("valid synthetic grid")
    }

    /// Which cluster is active at `t`, or `None` when all are.
    pub fn active_cluster(&self, t: f64) -> Option<usize> {
        self.switch_s
            .map(|s| (((t - self.start) / s).floor() as usize) % self.clusters.len().max(1))
    }
}

/// Generates a request stream sorted by time with ids in time order.
pub fn generate(params: &SynthParams) -> Vec<TripRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let grid = params.grid(params.side_m / 10.0);
    let total_rate = (params.cluster_rate_per_h + params.background_rate_per_h) / 3600.0;
    let mut out = Vec::new();
    if total_rate <= 0.0 {
        return out;
    }
    let gap = Exp::new(total_rate).expect("positive rate");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let uniform_point = |rng: &mut ChaCha8Rng| {
        grid.unproject(rng.gen_range(0.0..params.side_m), rng.gen_range(0.0..params.side_m))
    };
    let mut t = params.start;
    loop {
        t += gap.sample(&mut rng);
        if t >= params.start + params.duration_s {
            break;
        }
        let from_cluster = rng.gen::<f64>() * (params.cluster_rate_per_h + params.background_rate_per_h)
            < params.cluster_rate_per_h;
        let origin = if from_cluster && !params.clusters.is_empty() {
            let k = params
                .active_cluster(t)
                .unwrap_or_else(|| rng.gen_range(0..params.clusters.len()));
            let c = &params.clusters[k];
            let x = (c.x_m + c.sigma_m * unit.sample(&mut rng)).clamp(0.0, params.side_m);
            let y = (c.y_m + c.sigma_m * unit.sample(&mut rng)).clamp(0.0, params.side_m);
            grid.unproject(x, y)
        } else {
            uniform_point(&mut rng)
        };
        let destination = uniform_point(&mut rng);
        if origin == destination {
            continue;
        }
        out.push(TripRequest {
            id: out.len() as u64,
            request_time: t,
            origin,
            destination,
            passengers: 1,
        });
    }
    out
}
