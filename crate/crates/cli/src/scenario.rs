//! Loading a scenario, running it, and writing its outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fleetsim_core::demand::{parse_requests, DropTally, FilterPolicy, TripRequest};
use fleetsim_core::geo::{build_area_matrix, GeoPoint, Grid, TravelTimeMatrix, TravelTimeProvider};
use fleetsim_core::metrics::KpiReport;
use fleetsim_core::sim::{simulate, ForecastKind, Mode, SimConfig, SimOutput};
use fleetsim_mip::SolverConfig;
use rayon::prelude::*;

use crate::config::{forecast_name, mode_name, ConfigError, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("output directory {0} is not empty (use --force to overwrite)")]
    OutputNotEmpty(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Everything a run needs, resolved from a config and its data.
pub struct Scenario {
    /// The config with `day_start` and `bbox` filled in.
    pub config: ScenarioConfig,
    pub requests: Vec<TripRequest>,
    pub dropped: DropTally,
    pub grid: Grid,
    pub tt: TravelTimeProvider,
    pub matrix: Option<TravelTimeMatrix>,
}

impl Scenario {
    pub fn load(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
        let mut cfg = cfg.clone();
        let filter = FilterPolicy {
            sanity_bbox: cfg
                .bbox
                .map(|(lo, hi)| FilterPolicy::expanded_bbox(lo, hi, cfg.sanity_margin_m)),
            window: None,
        };
        let file = File::open(&cfg.dataset).map_err(|e| {
            ScenarioError::Config(ConfigError::Invalid {
                key: "dataset".into(),
                msg: format!("{}: {e}", cfg.dataset.display()),
            })
        })?;
        let parsed = parse_requests(BufReader::new(file), &filter)
            .map_err(|e| ScenarioError::Data(format!("{}: {e}", cfg.dataset.display())))?;
        let mut dropped = parsed.dropped;
        let mut requests = parsed.requests;

        let day_start = match cfg.day_start {
            Some(t) => t,
            None => match requests.first() {
                Some(r) => r.request_time + cfg.warmup_s,
                None => return Err(ScenarioError::Data("no usable requests in the dataset".into())),
            },
        };
        cfg.day_start = Some(day_start);
        let (from, to) = (day_start - cfg.warmup_s, day_start + cfg.duration_s);
        let before = requests.len();
        requests.retain(|r| r.request_time >= from && r.request_time < to);
        dropped.outside_window += (before - requests.len()) as u64;
        for (k, r) in requests.iter_mut().enumerate() {
            r.id = k as u64;
        }

        if cfg.bbox.is_none() {
            let points = requests.iter().flat_map(|r| [r.origin, r.destination]);
            let mut lo = GeoPoint::new(f64::INFINITY, f64::INFINITY);
            let mut hi = GeoPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in points {
                lo = GeoPoint::new(lo.lat.min(p.lat), lo.lon.min(p.lon));
                hi = GeoPoint::new(hi.lat.max(p.lat), hi.lon.max(p.lon));
            }
            if !lo.lat.is_finite() {
                return Err(ScenarioError::Data("no requests inside the scenario window".into()));
            }
            // keep the box non-degenerate when all points share a coordinate
            if hi.lat <= lo.lat {
                hi.lat = lo.lat + 1e-3;
            }
            if hi.lon <= lo.lon {
                hi.lon = lo.lon + 1e-3;
            }
            cfg.bbox = Some((lo, hi));
        }
        let (lo, hi) = cfg.bbox.expect("set above");
        let grid = Grid::build(lo, hi, cfg.cell_size_m).map_err(|e| ScenarioError::Data(e.to_string()))?;

        let (tt, matrix) = match &cfg.travel_matrix {
            Some(path) => {
                let file = File::open(path)?;
                let m = TravelTimeMatrix::from_csv(BufReader::new(file), grid.num_areas()).map_err(|e| {
                    ScenarioError::Config(ConfigError::Invalid {
                        key: "travel_matrix".into(),
                        msg: e.to_string(),
                    })
                })?;
                let tt = TravelTimeProvider::Matrix {
                    grid: Arc::new(grid.clone()),
                    matrix: Arc::new(m.clone()),
                    fallback_speed_mps: cfg.speed_mps,
                };
                (tt, Some(m))
            }
            None => (TravelTimeProvider::constant_speed(cfg.speed_mps), None),
        };
        let matrix = match (cfg.mode, matrix) {
            (Mode::Fdr, None) => Some(build_area_matrix(&grid, &tt)),
            (_, m) => m,
        };
        Ok(Scenario {
            config: cfg,
            requests,
            dropped,
            grid,
            tt,
            matrix,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        let c = &self.config;
        let day_start = c.day_start.expect("resolved at load");
        SimConfig {
            mode: c.mode,
            forecast: c.forecast,
            fleet_size: c.fleet(),
            dispatch: c.dispatch.clone(),
            reposition: c.reposition.clone(),
            solver: SolverConfig {
                node_limit: c.node_limit,
                time_limit_s: c.solver_time_limit_s,
                mip_gap: c.mip_gap,
                ..SolverConfig::default()
            },
            sim_start: day_start - c.warmup_s,
            warmup_s: c.warmup_s,
            duration_s: c.duration_s,
            position_update_s: c.position_update_s,
            seed: c.seed,
            record_transitions: false,
        }
    }

    pub fn run(&self) -> SimOutput {
        simulate(self.sim_config(), &self.requests, &self.grid, &self.tt, self.matrix.clone())
            .expect("config validated at load")
    }
}

fn prepare_output(dir: &Path, force: bool) -> Result<(), ScenarioError> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(ScenarioError::OutputNotEmpty(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Result of a single run as written to disk.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub output_dir: PathBuf,
    pub report: KpiReport,
    pub ticks: usize,
    pub wall_s: f64,
}

pub const CONFIG_ECHO: &str = "config.resolved";
pub const AUDIT_LOG: &str = "audit.jsonl";

/// Runs one scenario and writes kpi.json, kpi.csv, timeseries.csv, the
/// resolved config, and in fdr mode the per-tick audit log.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>, force: bool) -> Result<RunResult, ScenarioError> {
    let dir = out.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    prepare_output(&dir, force)?;
    let started = std::time::Instant::now();
    let scenario = Scenario::load(cfg)?;
    log::info!(
        "{} requests kept, {} dropped, {} areas, {} vehicles",
        scenario.requests.len(),
        scenario.dropped.total(),
        scenario.grid.num_areas(),
        scenario.config.fleet()
    );
    let output = scenario.run();
    output.report.export(&dir)?;
    let mut echo = scenario.config.clone();
    echo.dataset = absolute(&echo.dataset);
    echo.travel_matrix = echo.travel_matrix.as_deref().map(absolute);
    echo.output_dir = absolute(&dir);
    std::fs::write(dir.join(CONFIG_ECHO), echo.to_text())?;
    if scenario.config.mode == Mode::Fdr {
        let mut w = BufWriter::new(File::create(dir.join(AUDIT_LOG))?);
        for a in &output.audit {
            serde_json::to_writer(&mut w, a).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(RunResult {
        output_dir: dir,
        report: output.report,
        ticks: output.audit.len(),
        wall_s: started.elapsed().as_secs_f64(),
    })
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// A repositioning strategy as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub mode: Mode,
    pub forecast: Option<ForecastKind>,
}

impl Strategy {
    /// `none`, `react`, `fdr` (forecast from the config), `fdr-perfect`, `fdr-naive`.
    pub fn parse(s: &str) -> Option<Strategy> {
        let (mode, forecast) = match s.trim() {
            "none" => (Mode::None, None),
            "react" => (Mode::React, None),
            "fdr" => (Mode::Fdr, None),
            "fdr-perfect" => (Mode::Fdr, Some(ForecastKind::Perfect)),
            "fdr-naive" => (Mode::Fdr, Some(ForecastKind::Naive)),
            _ => return None,
        };
        Some(Strategy { mode, forecast })
    }

    pub fn label(&self) -> String {
        match self.forecast {
            Some(f) => format!("{}-{}", mode_name(self.mode), forecast_name(f)),
            None => mode_name(self.mode).to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub strategy: Strategy,
    pub factor: f64,
    pub fleet_size: usize,
    pub result: Result<RunResult, String>,
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "mode",
    "forecast",
    "factor",
    "fleet_size",
    "status",
    "rejection_rate",
    "mean_waiting_s",
    "mean_vehicle_travel_s",
    "output_dir",
];

/// Runs every (strategy, factor) pair, each into its own subdirectory of
/// `out`, and writes `summary.csv`. A failed run is recorded and the rest
/// continue.
pub fn run_matrix(
    cfg: &ScenarioConfig,
    strategies: &[Strategy],
    factors: &[f64],
    jobs: usize,
    out: &Path,
    force: bool,
) -> Result<Vec<MatrixRow>, ScenarioError> {
    prepare_output(out, force)?;
    let mut plan = Vec::new();
    for s in strategies {
        for &f in factors {
            let mut c = cfg.clone();
            c.mode = s.mode;
            if s.mode == Mode::Fdr {
                c.forecast = s.forecast.or(cfg.forecast);
            } else {
                c.forecast = s.forecast;
            }
            c.vehicle_factor = f;
            let dir = out.join(format!("{}_x{f}", s.label()));
            plan.push((*s, f, c, dir));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ScenarioError::Data(e.to_string()))?;
    let rows: Vec<MatrixRow> = pool.install(|| {
        plan.into_par_iter()
            .map(|(strategy, factor, c, dir)| {
                let fleet_size = c.fleet();
                let result = c
                    .validate()
                    .map_err(ScenarioError::from)
                    .and_then(|_| run_scenario(&c, Some(&dir), force))
                    .map_err(|e| e.to_string());
                if let Err(e) = &result {
                    log::error!("{} x{factor}: {e}", strategy.label());
                }
                MatrixRow {
                    strategy,
                    factor,
                    fleet_size,
                    result,
                }
            })
            .collect()
    });
    let mut w = csv::Writer::from_path(out.join("summary.csv")).map_err(|e| ScenarioError::Data(e.to_string()))?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let write = |w: &mut csv::Writer<File>, rec: Vec<String>| w.write_record(rec).map_err(|e| ScenarioError::Data(e.to_string()));
    write(&mut w, SUMMARY_HEADER.iter().map(|s| s.to_string()).collect())?;
    for row in &rows {
        let forecast = row.strategy.forecast.map_or("", forecast_name).to_string();
        let mut rec = vec![
            mode_name(row.strategy.mode).to_string(),
            forecast,
            row.factor.to_string(),
            row.fleet_size.to_string(),
        ];
        match &row.result {
            Ok(r) => rec.extend([
                "ok".to_string(),
                r.report.rejection_rate.to_string(),
                opt(r.report.mean_waiting_s),
                r.report.mean_vehicle_travel_s.to_string(),
                r.output_dir.display().to_string(),
            ]),
            Err(e) => rec.extend([format!("error: {e}"), String::new(), String::new(), String::new(), String::new()]),
        }
        write(&mut w, rec)?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub kept: usize,
    pub dropped: DropTally,
    pub first_request: Option<f64>,
    pub last_request: Option<f64>,
    pub day_start: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

/// Parses and filters the dataset without simulating.
pub fn ingest_check(cfg: &ScenarioConfig) -> Result<IngestReport, ScenarioError> {
    let s = Scenario::load(cfg)?;
    Ok(IngestReport {
        kept: s.requests.len(),
        dropped: s.dropped,
        first_request: s.requests.first().map(|r| r.request_time),
        last_request: s.requests.last().map(|r| r.request_time),
        day_start: s.config.day_start.expect("resolved"),
        grid_rows: s.grid.n_rows,
        grid_cols: s.grid.n_cols,
    })
}
