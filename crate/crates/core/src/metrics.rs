//! KPI accumulation with warm-up exclusion, plus JSON and CSV export.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request_id: u64,
    pub request_time: f64,
    pub accepted: bool,
    pub vehicle_id: Option<usize>,
    pub pickup_time: Option<f64>,
    pub dropoff_time: Option<f64>,
}

impl RequestOutcome {
    pub fn waiting_s(&self) -> Option<f64> {
        self.pickup_time.map(|p| p - self.request_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub minute: u32,
    pub idle: u32,
    pub touring: u32,
    pub repositioning: u32,
    pub requests: u32,
    pub rejections: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub fleet_size: u32,
    pub total_requests: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub rejection_rate: f64,
    pub mean_waiting_s: Option<f64>,
    pub median_waiting_s: Option<f64>,
    pub total_vehicle_travel_s: f64,
    pub mean_vehicle_travel_s: f64,
    pub repositioning_travel_s: f64,
    pub series: Vec<SeriesRow>,
}

/// Collects outcomes and travel during a run. Only outcomes whose request
/// time is at or after `warmup_end` count.
#[derive(Debug, Clone)]
pub struct Accumulator {
    pub warmup_end: f64,
    pub fleet_size: u32,
    outcomes: Vec<RequestOutcome>,
    travel_s: f64,
    repositioning_s: f64,
    series: Vec<SeriesRow>,
}

impl Accumulator {
    pub fn new(warmup_end: f64, fleet_size: u32) -> Self {
        Accumulator {
            warmup_end,
            fleet_size,
            outcomes: Vec::new(),
            travel_s: 0.0,
            repositioning_s: 0.0,
            series: Vec::new(),
        }
    }

    /// Returns whether the outcome counts.
    pub fn record_outcome(&mut self, outcome: RequestOutcome) -> bool {
        if outcome.request_time >= self.warmup_end {
            self.outcomes.push(outcome);
            true
        } else {
            false
        }
    }

    /// Fills the request and rejection columns of the sampled rows, bucketing
    /// counted outcomes by minute since `day_start`.
    pub fn tally_series(&mut self, day_start: f64) {
        for row in &mut self.series {
            row.requests = 0;
            row.rejections = 0;
        }
        for o in &self.outcomes {
            let m = ((o.request_time - day_start) / 60.0).floor();
            if m < 0.0 {
                continue;
            }
            if let Some(row) = self.series.get_mut(m as usize) {
                row.requests += 1;
                row.rejections += u32::from(!o.accepted);
            }
        }
    }

    /// Driving between `from` and `to`, clipped to the post-warm-up period.
    pub fn record_travel(&mut self, from: f64, to: f64, repositioning: bool) {
        let secs = (to - from.max(self.warmup_end)).max(0.0);
        self.travel_s += secs;
        if repositioning {
            self.repositioning_s += secs;
        }
    }

    pub fn record_sample(&mut self, row: SeriesRow) {
        self.series.push(row);
    }

    pub fn outcomes(&self) -> &[RequestOutcome] {
        &self.outcomes
    }

    pub fn finalize(self) -> KpiReport {
        let total = self.outcomes.len() as u64;
        let accepted = self.outcomes.iter().filter(|o| o.accepted).count() as u64;
        let mut waits: Vec<f64> = self.outcomes.iter().filter_map(RequestOutcome::waiting_s).collect();
        waits.sort_by(f64::total_cmp);
        let mean = (!waits.is_empty()).then(|| waits.iter().sum::<f64>() / waits.len() as f64);
        let median = (!waits.is_empty()).then(|| {
            let k = waits.len() / 2;
            if waits.len() % 2 == 1 {
                waits[k]
            } else {
                (waits[k - 1] + waits[k]) / 2.0
            }
        });
        KpiReport {
            fleet_size: self.fleet_size,
            total_requests: total,
            accepted,
            rejected: total - accepted,
            rejection_rate: if total == 0 { 0.0 } else { (total - accepted) as f64 / total as f64 },
            mean_waiting_s: mean,
            median_waiting_s: median,
            total_vehicle_travel_s: self.travel_s,
            mean_vehicle_travel_s: if self.fleet_size == 0 {
                0.0
            } else {
                self.travel_s / self.fleet_size as f64
            },
            repositioning_travel_s: self.repositioning_s,
            series: self.series,
        }
    }
}

pub const KPI_CSV_HEADER: [&str; 10] = [
    "fleet_size",
    "total_requests",
    "accepted",
    "rejected",
    "rejection_rate",
    "mean_waiting_s",
    "median_waiting_s",
    "total_vehicle_travel_s",
    "mean_vehicle_travel_s",
    "repositioning_travel_s",
];

pub const SERIES_CSV_HEADER: [&str; 6] = ["minute", "idle", "touring", "repositioning", "requests", "rejections"];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl KpiReport {
    pub fn write_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> std::io::Result<KpiReport> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn write_kpi_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(KPI_CSV_HEADER)?;
        wtr.write_record([
            self.fleet_size.to_string(),
            self.total_requests.to_string(),
            self.accepted.to_string(),
            self.rejected.to_string(),
            self.rejection_rate.to_string(),
            opt(self.mean_waiting_s),
            opt(self.median_waiting_s),
            self.total_vehicle_travel_s.to_string(),
            self.mean_vehicle_travel_s.to_string(),
            self.repositioning_travel_s.to_string(),
        ])?;
        wtr.flush()?;
        Ok(())
    }

    pub fn write_series_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(SERIES_CSV_HEADER)?;
        for r in &self.series {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_series_csv<R: Read>(r: R) -> csv::Result<Vec<SeriesRow>> {
        csv::Reader::from_reader(r).deserialize().collect()
    }

    /// Writes `kpi.json`, `kpi.csv` and `timeseries.csv` into `dir`.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        let file = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
        let mut json = file("kpi.json")?;
        self.write_json(&mut json)?;
        json.write_all(b"\n")?;
        json.flush()?;
        self.write_kpi_csv(file("kpi.csv")?)?;
        self.write_series_csv(file("timeseries.csv")?)?;
        Ok(())
    }
}
