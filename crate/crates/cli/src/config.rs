//! Line-based `key = value` scenario configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fleetsim_core::demand::parse_time;
use fleetsim_core::dispatch::DispatchParams;
use fleetsim_core::geo::{GeoPoint, DEFAULT_SPEED_MPS};
use fleetsim_core::reposition::RepositionParams;
use fleetsim_core::sim::{ForecastKind, Mode};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dataset: PathBuf,
    pub fleet_size: u32,
    pub vehicle_factor: f64,
    /// South-west and north-east corners. Derived from the data when absent.
    pub bbox: Option<(GeoPoint, GeoPoint)>,
    /// Requests farther than this outside a configured bbox are dropped.
    pub sanity_margin_m: f64,
    pub cell_size_m: f64,
    pub speed_mps: f64,
    pub travel_matrix: Option<PathBuf>,
    pub dispatch: DispatchParams,
    pub reposition: RepositionParams,
    pub mode: Mode,
    pub forecast: Option<ForecastKind>,
    pub warmup_s: f64,
    /// Start of the measured day. Defaults to the first request plus warm-up.
    pub day_start: Option<f64>,
    pub duration_s: f64,
    pub position_update_s: f64,
    pub seed: u64,
    pub mip_gap: f64,
    pub node_limit: usize,
    pub solver_time_limit_s: f64,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    /// Defaults for everything but the dataset and fleet size.
    pub fn new(dataset: PathBuf, fleet_size: u32) -> Self {
        ScenarioConfig {
            dataset,
            fleet_size,
            vehicle_factor: 1.0,
            bbox: None,
            sanity_margin_m: 5_000.0,
            cell_size_m: 1_000.0,
            speed_mps: DEFAULT_SPEED_MPS,
            travel_matrix: None,
            dispatch: DispatchParams::default(),
            reposition: RepositionParams::default(),
            mode: Mode::None,
            forecast: None,
            warmup_s: 6.0 * 3600.0,
            day_start: None,
            duration_s: 86_400.0,
            position_update_s: 30.0,
            seed: 1,
            mip_gap: 1e-2,
            node_limit: 2_000,
            solver_time_limit_s: 30.0,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Base size times factor, rounded.
    pub fn fleet(&self) -> usize {
        (self.fleet_size as f64 * self.vehicle_factor).round() as usize
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        for (key, p) in [("dataset", Some(&cfg.dataset)), ("travel_matrix", cfg.travel_matrix.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(invalid(key, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(cfg)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut seen: Vec<String> = Vec::new();
        let mut cfg = ScenarioConfig::new(PathBuf::new(), 0);
        cfg.output_dir = base.join("out");
        let (mut dataset, mut fleet) = (None, None);
        let mut bbox = [None; 4];
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if seen.iter().any(|s| s == key) {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    line,
                });
            }
            seen.push(key.to_string());
            let num = || -> Result<f64, ConfigError> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(key, format!("`{value}` is not a number")))
            };
            let int = || -> Result<u64, ConfigError> {
                value
                    .parse::<u64>()
                    .map_err(|_| invalid(key, format!("`{value}` is not a non-negative integer")))
            };
            let path = || -> Result<PathBuf, ConfigError> {
                if value.is_empty() {
                    return Err(invalid(key, "empty path"));
                }
                Ok(base.join(value))
            };
            match key {
                "dataset" => dataset = Some(path()?),
                "fleet_size" => fleet = Some(u32::try_from(int()?).map_err(|_| invalid(key, "too large"))?),
                "vehicle_factor" => cfg.vehicle_factor = num()?,
                "bbox_min_lat" => bbox[0] = Some(num()?),
                "bbox_min_lon" => bbox[1] = Some(num()?),
                "bbox_max_lat" => bbox[2] = Some(num()?),
                "bbox_max_lon" => bbox[3] = Some(num()?),
                "sanity_margin_m" => cfg.sanity_margin_m = num()?,
                "cell_size_m" => cfg.cell_size_m = num()?,
                "speed_mps" => cfg.speed_mps = num()?,
                "travel_matrix" => cfg.travel_matrix = Some(path()?),
                "capacity" => {
                    cfg.dispatch.capacity = u32::try_from(int()?).map_err(|_| invalid(key, "too large"))?
                }
                "max_wait_s" => cfg.dispatch.max_wait_s = num()?,
                "ride_factor" => cfg.dispatch.ride_factor = num()?,
                "ride_buffer_s" => cfg.dispatch.ride_buffer_s = num()?,
                "dwell_s" => cfg.dispatch.dwell_s = num()?,
                "horizon_s" => cfg.reposition.horizon_s = num()?,
                "interval_s" => cfg.reposition.interval_s = num()?,
                "productivity" => cfg.reposition.productivity = num()?,
                "alpha" => cfg.reposition.alpha = num()?,
                "beta" => cfg.reposition.beta = num()?,
                "w1" => cfg.reposition.w1 = num()?,
                "w2" => cfg.reposition.w2 = num()?,
                "mode" => {
                    cfg.mode = match value {
                        "none" => Mode::None,
                        "react" => Mode::React,
                        "fdr" => Mode::Fdr,
                        _ => return Err(invalid(key, format!("`{value}` is not one of none, react, fdr"))),
                    }
                }
                "forecast" => {
                    cfg.forecast = Some(match value {
                        "perfect" => ForecastKind::Perfect,
                        "naive" => ForecastKind::Naive,
                        _ => return Err(invalid(key, format!("`{value}` is not one of perfect, naive"))),
                    })
                }
                "warmup_s" => cfg.warmup_s = num()?,
                "day_start" => {
                    cfg.day_start =
                        Some(parse_time(value).ok_or_else(|| invalid(key, format!("`{value}` is not a timestamp")))?)
                }
                "duration_s" => cfg.duration_s = num()?,
                "position_update_s" => cfg.position_update_s = num()?,
                "seed" => cfg.seed = int()?,
                "mip_gap" => cfg.mip_gap = num()?,
                "node_limit" => cfg.node_limit = int()? as usize,
                "solver_time_limit_s" => cfg.solver_time_limit_s = num()?,
                "output_dir" => cfg.output_dir = path()?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        key: key.to_string(),
                        line,
                    })
                }
            }
        }
        cfg.dataset = dataset.ok_or(ConfigError::Missing("dataset"))?;
        cfg.fleet_size = fleet.ok_or(ConfigError::Missing("fleet_size"))?;
        cfg.bbox = match bbox {
            [None, None, None, None] => None,
            [Some(a), Some(b), Some(c), Some(d)] => Some((GeoPoint::new(a, b), GeoPoint::new(c, d))),
            _ => return Err(invalid("bbox_min_lat", "give all four bbox_* keys or none")),
        };
        // the coverage radius is the customers' maximum wait
        cfg.reposition.coverage_s = cfg.dispatch.max_wait_s;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        if self.fleet_size == 0 {
            return Err(invalid("fleet_size", "must be positive"));
        }
        positive("vehicle_factor", self.vehicle_factor)?;
        if self.fleet() == 0 {
            return Err(invalid("vehicle_factor", "rounds the fleet down to zero vehicles"));
        }
        positive("cell_size_m", self.cell_size_m)?;
        positive("speed_mps", self.speed_mps)?;
        positive("max_wait_s", self.dispatch.max_wait_s)?;
        positive("position_update_s", self.position_update_s)?;
        positive("solver_time_limit_s", self.solver_time_limit_s)?;
        if self.dispatch.capacity == 0 {
            return Err(invalid("capacity", "must be positive"));
        }
        if self.dispatch.ride_factor < 1.0 {
            return Err(invalid("ride_factor", "must be at least 1"));
        }
        for (key, v) in [
            ("ride_buffer_s", self.dispatch.ride_buffer_s),
            ("dwell_s", self.dispatch.dwell_s),
            ("warmup_s", self.warmup_s),
            ("sanity_margin_m", self.sanity_margin_m),
            ("mip_gap", self.mip_gap),
        ] {
            if v < 0.0 {
                return Err(invalid(key, format!("must not be negative, got {v}")));
            }
        }
        positive("duration_s", self.duration_s)?;
        if (self.reposition.coverage_s - self.dispatch.max_wait_s).abs() > 0.0 {
            return Err(invalid("max_wait_s", "coverage radius and maximum wait must agree"));
        }
        self.reposition.validate().map_err(|(k, msg)| invalid(k, msg))?;
        if let Some((lo, hi)) = self.bbox {
            if !lo.is_valid() || !hi.is_valid() || lo.lat >= hi.lat || lo.lon >= hi.lon {
                return Err(invalid("bbox_min_lat", "bbox corners must be valid and ordered"));
            }
        }
        if self.mode == Mode::Fdr && self.forecast.is_none() {
            return Err(invalid("forecast", "required when mode = fdr"));
        }
        Ok(())
    }

    /// Every key with its value; parsing the result yields this config again
    /// (paths are written as given, so make them absolute first).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.display().to_string());
        kv("fleet_size", self.fleet_size.to_string());
        kv("vehicle_factor", self.vehicle_factor.to_string());
        if let Some((lo, hi)) = self.bbox {
            kv("bbox_min_lat", lo.lat.to_string());
            kv("bbox_min_lon", lo.lon.to_string());
            kv("bbox_max_lat", hi.lat.to_string());
            kv("bbox_max_lon", hi.lon.to_string());
        }
        kv("sanity_margin_m", self.sanity_margin_m.to_string());
        kv("cell_size_m", self.cell_size_m.to_string());
        kv("speed_mps", self.speed_mps.to_string());
        if let Some(m) = &self.travel_matrix {
            kv("travel_matrix", m.display().to_string());
        }
        let d = &self.dispatch;
        kv("capacity", d.capacity.to_string());
        kv("max_wait_s", d.max_wait_s.to_string());
        kv("ride_factor", d.ride_factor.to_string());
        kv("ride_buffer_s", d.ride_buffer_s.to_string());
        kv("dwell_s", d.dwell_s.to_string());
        let r = &self.reposition;
        kv("horizon_s", r.horizon_s.to_string());
        kv("interval_s", r.interval_s.to_string());
        kv("productivity", r.productivity.to_string());
        kv("alpha", r.alpha.to_string());
        kv("beta", r.beta.to_string());
        kv("w1", r.w1.to_string());
        kv("w2", r.w2.to_string());
        kv("mode", mode_name(self.mode).to_string());
        if let Some(f) = self.forecast {
            kv("forecast", forecast_name(f).to_string());
        }
        kv("warmup_s", self.warmup_s.to_string());
        if let Some(t) = self.day_start {
            kv("day_start", t.to_string());
        }
        kv("duration_s", self.duration_s.to_string());
        kv("position_update_s", self.position_update_s.to_string());
        kv("seed", self.seed.to_string());
        kv("mip_gap", self.mip_gap.to_string());
        kv("node_limit", self.node_limit.to_string());
        kv("solver_time_limit_s", self.solver_time_limit_s.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        s
    }
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::None => "none",
        Mode::React => "react",
        Mode::Fdr => "fdr",
    }
}

pub fn forecast_name(f: ForecastKind) -> &'static str {
    match f {
        ForecastKind::Perfect => "perfect",
        ForecastKind::Naive => "naive",
    }
}
