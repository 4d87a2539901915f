mod common;

use std::process::Command;

use common::{setup, EPOCH};
use fleetsim_cli::config::ScenarioConfig;
use fleetsim_cli::scenario::{ingest_check, run_matrix, run_scenario, ScenarioError, Strategy, AUDIT_LOG, CONFIG_ECHO};
use fleetsim_core::metrics::KpiReport;
use fleetsim_core::synth::SynthParams;

fn small() -> SynthParams {
    SynthParams::two_clusters(EPOCH, 3.0 * 3600.0, 5)
}

#[test]
fn run_writes_outputs_and_guards_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = setup(dir.path(), &small(), 30, 1800.0, 3600.0, "mode = react");
    let cfg = ScenarioConfig::load(&path).unwrap();
    let out = dir.path().join("run");
    let r = run_scenario(&cfg, Some(&out), false).unwrap();
    for f in ["kpi.json", "kpi.csv", "timeseries.csv", CONFIG_ECHO] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join(AUDIT_LOG).exists());
    let back = KpiReport::read_json(std::fs::File::open(out.join("kpi.json")).unwrap()).unwrap();
    assert_eq!(back, r.report);
    let series = KpiReport::read_series_csv(std::fs::File::open(out.join("timeseries.csv")).unwrap()).unwrap();
    assert_eq!(series, r.report.series);
    assert_eq!(series.len(), 60);
    assert!(series.iter().all(|s| s.idle + s.touring + s.repositioning == 30));

    let again = run_scenario(&cfg, Some(&out), false);
    assert!(matches!(again, Err(ScenarioError::OutputNotEmpty(_))));
    assert_eq!(again.unwrap_err().exit_code(), 1);
    let forced = run_scenario(&cfg, Some(&out), true).unwrap();
    assert_eq!(forced.report, r.report);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = setup(dir.path(), &small(), 25, 1800.0, 3600.0, "mode = fdr\nforecast = naive\nproductivity = 3");
    let cfg = ScenarioConfig::load(&path).unwrap();
    let first = dir.path().join("a");
    let r = run_scenario(&cfg, Some(&first), false).unwrap();
    let audit = std::fs::read_to_string(first.join(AUDIT_LOG)).unwrap();
    assert_eq!(audit.lines().count(), r.ticks);
    assert_eq!(r.ticks, (5400.0f64 / 180.0).ceil() as usize);
    for line in audit.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["solve_ms"].as_f64().unwrap() >= 0.0);
        assert!(v["status"].is_string());
    }

    let echoed = ScenarioConfig::load(&first.join(CONFIG_ECHO)).unwrap();
    assert_eq!(echoed.day_start, Some(EPOCH + 1800.0));
    assert!(echoed.bbox.is_some());
    let second = dir.path().join("b");
    run_scenario(&echoed, Some(&second), false).unwrap();
    for f in ["kpi.json", "timeseries.csv"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn matrix_summary_agrees_with_each_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = setup(dir.path(), &small(), 30, 1800.0, 3600.0, "productivity = 3");
    let cfg = ScenarioConfig::load(&path).unwrap();
    let strategies = ["none", "react", "fdr-naive"].map(|s| Strategy::parse(s).unwrap());
    let out = dir.path().join("matrix");
    let rows = run_matrix(&cfg, &strategies, &[0.5, 1.0], 2, &out, false).unwrap();
    assert_eq!(rows.len(), 6);
    let mut rdr = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 6);
    for rec in &recs {
        assert_eq!(&rec[4], "ok");
        let fleet: usize = rec[3].parse().unwrap();
        assert_eq!(fleet, if &rec[2] == "0.5" { 15 } else { 30 });
        let kpi = KpiReport::read_json(std::fs::File::open(std::path::Path::new(&rec[8]).join("kpi.json")).unwrap()).unwrap();
        assert_eq!(kpi.fleet_size as usize, fleet);
        assert_eq!(rec[5].parse::<f64>().unwrap(), kpi.rejection_rate);
        assert_eq!(rec[7].parse::<f64>().unwrap(), kpi.mean_vehicle_travel_s);
    }
    // the fdr rows picked up the forecast from the strategy name
    assert!(recs.iter().any(|r| &r[0] == "fdr" && &r[1] == "naive"));
}

#[test]
fn ingest_check_reports_drops() {
    let dir = tempfile::tempdir().unwrap();
    let p = small();
    let path = setup(dir.path(), &p, 10, 1800.0, 3600.0, "");
    let trips = dir.path().join("trips.csv");
    let kept_before = ingest_check(&ScenarioConfig::load(&path).unwrap()).unwrap().kept;
    let mut text = std::fs::read_to_string(&trips).unwrap();
    let t = EPOCH as i64 + 2000;
    let (lat, lon) = (p.min_corner.lat + 0.01, p.min_corner.lon + 0.01);
    text.push_str(&format!("{t},{lat},{lon},{},{},0\n", lat + 0.01, lon));
    text.push_str(&format!("{t},{lat},{lon},{lat},{lon},1\n"));
    text.push_str(&format!("{t},{},{lon},{lat},{lon},1\n", lat + 1.0));
    text.push_str("not a time,1,2,3,4,1\n");
    text.push_str(&format!("{},{lat},{lon},{},{},1\n", EPOCH as i64 + 99_999, lat + 0.01, lon));
    std::fs::write(&trips, text).unwrap();
    let r = ingest_check(&ScenarioConfig::load(&path).unwrap()).unwrap();
    assert_eq!(r.kept, kept_before);
    let d = r.dropped;
    assert_eq!((d.zero_passengers, d.same_location, d.outside_bbox, d.malformed), (1, 1, 1, 1));
    assert!(d.outside_window >= 1);
    assert_eq!(r.day_start, EPOCH + 1800.0);
    assert_eq!((r.grid_rows, r.grid_cols), (10, 10));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fleetsim");
    let dir = tempfile::tempdir().unwrap();
    let path = setup(dir.path(), &small(), 10, 1800.0, 1800.0, "");
    let out = dir.path().join("out");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let p = path.to_str().unwrap();
    let o = out.to_str().unwrap();

    assert_eq!(run(&["run", "--config", p, "--out", o]).status.code(), Some(0));
    let again = run(&["run", "--config", p, "--out", o]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("not empty"));
    assert_eq!(run(&["run", "--config", p, "--out", o, "--force"]).status.code(), Some(0));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "dataset = trips.csv\nfleet_size = 10\nmode = fdr\n").unwrap();
    let r = run(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("forecast"));
    std::fs::write(&bad, "dataset = trips.csv\nfleet_size = 10\nmax_wiat_s = 5\n").unwrap();
    let r = run(&["ingest-check", "--config", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("max_wiat_s"));

    let r = run(&["matrix", "--config", p, "--modes", "none,bogus", "--factors", "1"]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(&["validate-solver", "--count", "5", "--dump-dir", dir.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("0 mismatches"));
    let r = run(&["ingest-check", "--config", p]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("kept"));
}
