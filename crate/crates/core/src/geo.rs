//! Uniform grid partitioning of the study region and travel times.

use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

pub type AreaId = usize;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("degenerate bounding box: {0}")]
    DegenerateBbox(String),
    #[error("cell size must be positive, got {0}")]
    BadCellSize(f64),
    #[error("travel matrix: {0}")]
    Matrix(String),
    #[error("travel matrix csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Linear interpolation in lat/lon, which is linear in the grid's
    /// equirectangular projection as well.
    pub fn lerp(self, other: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint {
            lat: self.lat + (other.lat - self.lat) * t,
            lon: self.lon + (other.lon - self.lon) * t,
        }
    }
}

/// Great-circle distance in meters (haversine).
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Row-major grid of square cells anchored at the south-west corner.
/// Row 0 is the southernmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min_corner: GeoPoint,
    pub cell_size_m: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    m_per_deg_lat: f64,
    m_per_deg_lon: f64,
}

impl Grid {
    /// Cells are `cell_size_m` squares under an equirectangular projection
    /// evaluated at the box centroid; the grid extends past the north and
    /// east edges to cover the box completely.
    pub fn build(min: GeoPoint, max: GeoPoint, cell_size_m: f64) -> Result<Grid, GeoError> {
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(GeoError::BadCellSize(cell_size_m));
        }
        if !min.is_valid() || !max.is_valid() || min.lat > max.lat || min.lon > max.lon {
            return Err(GeoError::DegenerateBbox(format!("corners {min:?} / {max:?} are not ordered")));
        }
        let m_per_deg_lat = METERS_PER_DEGREE;
        let m_per_deg_lon = METERS_PER_DEGREE * ((min.lat + max.lat) / 2.0).to_radians().cos();
        let height = (max.lat - min.lat) * m_per_deg_lat;
        let width = (max.lon - min.lon) * m_per_deg_lon;
        if height <= 0.0 || width <= 0.0 {
            return Err(GeoError::DegenerateBbox(format!("zero area ({width} m x {height} m)")));
        }
        let cells = |extent: f64| ((extent / cell_size_m - 1e-9).ceil() as usize).max(1);
        Ok(Grid {
            min_corner: min,
            cell_size_m,
            n_rows: cells(height),
            n_cols: cells(width),
            m_per_deg_lat,
            m_per_deg_lon,
        })
    }

    pub fn num_areas(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Projected (x east, y north) offset from the min corner in meters.
    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.min_corner.lon) * self.m_per_deg_lon,
            (p.lat - self.min_corner.lat) * self.m_per_deg_lat,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint {
            lat: self.min_corner.lat + y / self.m_per_deg_lat,
            lon: self.min_corner.lon + x / self.m_per_deg_lon,
        }
    }

    /// Area containing `p`; points outside the grid clamp to the nearest
    /// boundary cell.
    pub fn locate(&self, p: GeoPoint) -> AreaId {
        let (x, y) = self.project(p);
        let clamp = |v: f64, n: usize| -> usize {
            let idx = (v / self.cell_size_m).floor();
            if idx.is_nan() || idx < 0.0 {
                0
            } else {
                (idx as usize).min(n - 1)
            }
        };
        clamp(y, self.n_rows) * self.n_cols + clamp(x, self.n_cols)
    }

    pub fn area_center(&self, a: AreaId) -> GeoPoint {
        assert!(a < self.num_areas(), "area {a} outside grid of {} areas", self.num_areas());
        let (row, col) = (a / self.n_cols, a % self.n_cols);
        self.unproject(
            (col as f64 + 0.5) * self.cell_size_m,
            (row as f64 + 0.5) * self.cell_size_m,
        )
    }

    /// North-east corner of the covered (cell-aligned) region.
    pub fn max_corner(&self) -> GeoPoint {
        self.unproject(
            self.n_cols as f64 * self.cell_size_m,
            self.n_rows as f64 * self.cell_size_m,
        )
    }
}

/// Dense origin-area by destination-area travel times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TravelTimeMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(AreaId, AreaId) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j { 0.0 } else { f(i, j) });
            }
        }
        TravelTimeMatrix { n, entries }
    }

    pub fn num_areas(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: AreaId, to: AreaId) -> f64 {
        self.entries[from * self.n + to]
    }

    /// Reads `from_area,to_area,seconds` rows. Every ordered pair of distinct
    /// areas must be present; diagonal rows are optional and must be zero.
    pub fn from_csv<R: Read>(reader: R, n: usize) -> Result<Self, GeoError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["from_area", "to_area", "seconds"] {
            return Err(GeoError::Matrix(format!("unexpected header {header:?}")));
        }
        let mut entries = vec![f64::NAN; n * n];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_area = |k: usize| -> Result<usize, GeoError> {
                rec.get(k)
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&a| a < n)
                    .ok_or_else(|| GeoError::Matrix(format!("row {}: bad area id", line + 2)))
            };
            let (i, j) = (parse_area(0)?, parse_area(1)?);
            let secs: f64 = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .filter(|s: &f64| s.is_finite() && *s >= 0.0)
                .ok_or_else(|| GeoError::Matrix(format!("row {}: bad seconds", line + 2)))?;
            if i == j && secs != 0.0 {
                return Err(GeoError::Matrix(format!("row {}: diagonal entry must be 0", line + 2)));
            }
            entries[i * n + j] = secs;
        }
        for i in 0..n {
            entries[i * n + i] = 0.0;
            for j in 0..n {
                if entries[i * n + j].is_nan() {
                    return Err(GeoError::Matrix(format!("missing pair {i} -> {j}")));
                }
            }
        }
        Ok(TravelTimeMatrix { n, entries })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), GeoError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["from_area", "to_area", "seconds"])?;
        for i in 0..self.n {
            for j in 0..self.n {
                wtr.write_record([i.to_string(), j.to_string(), self.get(i, j).to_string()])?;
            }
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Point-to-point travel times. Stateless per query and cheap to clone.
#[derive(Debug, Clone)]
pub enum TravelTimeProvider {
    /// Great-circle distance at a constant speed.
    ConstantSpeed { speed_mps: f64 },
    /// Area-to-area lookup. Points in the same area fall back to
    /// great-circle distance at `fallback_speed_mps`.
    Matrix {
        grid: Arc<Grid>,
        matrix: Arc<TravelTimeMatrix>,
        fallback_speed_mps: f64,
    },
}

pub const DEFAULT_SPEED_MPS: f64 = 8.33;

impl TravelTimeProvider {
    pub fn constant_speed(speed_mps: f64) -> Self {
        TravelTimeProvider::ConstantSpeed { speed_mps }
    }

    pub fn travel_time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        if from == to {
            return 0.0;
        }
        match self {
            TravelTimeProvider::ConstantSpeed { speed_mps } => haversine_m(from, to) / speed_mps,
            TravelTimeProvider::Matrix {
                grid,
                matrix,
                fallback_speed_mps,
            } => {
                let (a, b) = (grid.locate(from), grid.locate(to));
                if a == b {
                    haversine_m(from, to) / fallback_speed_mps
                } else {
                    matrix.get(a, b)
                }
            }
        }
    }
}

/// Travel times between area centers.
pub fn build_area_matrix(grid: &Grid, tt: &TravelTimeProvider) -> TravelTimeMatrix {
    if let TravelTimeProvider::Matrix { matrix, grid: g, .. } = tt {
        if g.as_ref() == grid {
            return matrix.as_ref().clone();
        }
    }
    let centers: Vec<GeoPoint> = (0..grid.num_areas()).map(|a| grid.area_center(a)).collect();
    TravelTimeMatrix::from_fn(grid.num_areas(), |i, j| tt.travel_time(centers[i], centers[j]))
}
