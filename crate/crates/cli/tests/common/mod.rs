#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};

use fleetsim_core::demand::write_requests;
use fleetsim_core::synth::{generate, SynthParams};

/// 2016-06-01T00:00:00 UTC.
pub const EPOCH: f64 = 1_464_739_200.0;

/// Writes the generated stream to `dir/trips.csv`.
pub fn write_dataset(dir: &Path, p: &SynthParams) -> PathBuf {
    let path = dir.join("trips.csv");
    write_requests(&generate(p), File::create(&path).unwrap()).unwrap();
    path
}

/// Config text for a synthetic dataset; `extra` lines are appended.
pub fn config_text(p: &SynthParams, fleet: u32, warmup_s: f64, duration_s: f64, extra: &str) -> String {
    let (lo, hi) = (p.min_corner, p.max_corner());
    format!(
        "dataset = trips.csv\n\
         fleet_size = {fleet}\n\
         bbox_min_lat = {}\nbbox_min_lon = {}\nbbox_max_lat = {}\nbbox_max_lon = {}\n\
         warmup_s = {warmup_s}\n\
         day_start = {}\n\
         duration_s = {duration_s}\n\
         {extra}\n",
        lo.lat,
        lo.lon,
        hi.lat,
        hi.lon,
        (p.start + warmup_s) as i64,
    )
}

/// Writes dataset and config into `dir` and returns the config path.
pub fn setup(dir: &Path, p: &SynthParams, fleet: u32, warmup_s: f64, duration_s: f64, extra: &str) -> PathBuf {
    write_dataset(dir, p);
    let cfg = dir.join("scenario.cfg");
    std::fs::write(&cfg, config_text(p, fleet, warmup_s, duration_s, extra)).unwrap();
    cfg
}
