use fleetsim_core::demand::TripRequest;
use fleetsim_core::dispatch::DispatchParams;
use fleetsim_core::geo::{GeoPoint, Grid, TravelTimeProvider};
use fleetsim_core::metrics::KpiReport;
use fleetsim_core::reposition::RepositionParams;
use fleetsim_core::sim::{simulate, ForecastKind, Mode, Phase, SimConfig, SimOutput, Simulation};
use fleetsim_core::synth::{generate, SynthParams};
use fleetsim_mip::SolverConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPEED: f64 = 10.0;

/// Great-circle seconds at `SPEED`, Vincenty form of the central angle.
fn secs(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    6_371_008.8 * y.atan2(x) / SPEED
}

fn base_point() -> GeoPoint {
    GeoPoint::new(53.55, 9.99)
}

/// Point `north_m` / `east_m` metres from the base point.
fn offset(north_m: f64, east_m: f64) -> GeoPoint {
    let b = base_point();
    let m_per_deg = 6_371_008.8 * std::f64::consts::PI / 180.0;
    GeoPoint::new(b.lat + north_m / m_per_deg, b.lon + east_m / (m_per_deg * b.lat.to_radians().cos()))
}

fn grid(side_m: f64) -> Grid {
    Grid::build(base_point(), offset(side_m, side_m), 1000.0).unwrap()
}

fn config(mode: Mode, fleet: usize, warmup_s: f64, duration_s: f64) -> SimConfig {
    SimConfig {
        mode,
        forecast: (mode == Mode::Fdr).then_some(ForecastKind::Perfect),
        fleet_size: fleet,
        dispatch: DispatchParams::default(),
        reposition: RepositionParams {
            productivity: 3.0,
            ..RepositionParams::default()
        },
        solver: SolverConfig {
            mip_gap: 1e-2,
            node_limit: 2000,
            ..SolverConfig::default()
        },
        sim_start: 0.0,
        warmup_s,
        duration_s,
        position_update_s: 30.0,
        seed: 7,
        record_transitions: true,
    }
}

fn request(id: u64, t: f64, o: GeoPoint, d: GeoPoint) -> TripRequest {
    TripRequest {
        id,
        request_time: t,
        origin: o,
        destination: d,
        passengers: 1,
    }
}

fn run_at(cfg: SimConfig, reqs: &[TripRequest], g: &Grid, positions: Vec<GeoPoint>) -> SimOutput {
    let tt = TravelTimeProvider::constant_speed(SPEED);
    Simulation::new(cfg, reqs, g, &tt, None)
        .unwrap()
        .with_initial_positions(positions)
        .unwrap()
        .run()
}

#[test]
fn empty_stream_leaves_fleet_idle() {
    let g = grid(3000.0);
    let out = run_at(config(Mode::None, 3, 600.0, 1800.0), &[], &g, vec![base_point(); 3]);
    let r = &out.report;
    assert_eq!((r.total_requests, r.rejected, r.accepted), (0, 0, 0));
    assert_eq!(r.rejection_rate, 0.0);
    assert_eq!(r.total_vehicle_travel_s, 0.0);
    assert_eq!(r.mean_waiting_s, None);
    assert_eq!(r.series.len(), 30);
    assert!(r.series.iter().all(|s| s.idle == 3 && s.touring == 0 && s.repositioning == 0));
    assert!(out.transitions.is_empty());
}

#[test]
fn single_request_matches_hand_computation() {
    let g = grid(5000.0);
    let start = offset(0.0, 0.0);
    let (o, d) = (offset(1500.0, 0.0), offset(1500.0, 3000.0));
    let reqs = [request(0, 100.0, o, d)];
    let out = run_at(config(Mode::None, 1, 0.0, 3600.0), &reqs, &g, vec![start]);
    let approach = secs(start, o);
    let direct = secs(o, d);
    let rec = &out.outcomes[0];
    assert!(rec.accepted);
    assert!((rec.waiting_s().unwrap() - approach).abs() < 1e-6);
    assert!((rec.pickup_time.unwrap() - (100.0 + approach)).abs() < 1e-6);
    assert!((rec.dropoff_time.unwrap() - (100.0 + approach + 30.0 + direct)).abs() < 1e-6);
    // travel counts driving only, not dwell
    assert!((out.report.total_vehicle_travel_s - (approach + direct)).abs() < 1e-6);
    assert_eq!(out.report.repositioning_travel_s, 0.0);
    // the vehicle is idle again after the dropoff dwell
    let last = out.transitions.last().unwrap();
    assert_eq!((last.from, last.to), (Phase::Touring, Phase::Idle));
    assert!((last.time - (100.0 + approach + 30.0 + direct + 30.0)).abs() < 1e-6);
}

#[test]
fn warmup_boundary_is_closed() {
    let g = grid(3000.0);
    let (o, d) = (offset(100.0, 100.0), offset(900.0, 900.0));
    let reqs = [
        request(0, 599.5, o, d),
        request(1, 600.0, o, d),
        request(2, 1200.0, o, d),
    ];
    let out = run_at(config(Mode::None, 2, 600.0, 1200.0), &reqs, &g, vec![o; 2]);
    let ids: Vec<u64> = out.outcomes.iter().map(|o| o.request_id).collect();
    assert_eq!(ids, vec![1, 2]);
    assert_eq!(out.report.total_requests, 2);
}

#[test]
fn react_sends_nearest_idle_vehicle_then_dispatches_it() {
    let g = grid(10_000.0);
    // vehicle 1 is nearer to the far pickup than vehicle 0
    let (v0, v1) = (offset(0.0, 0.0), offset(5000.0, 0.0));
    let far = offset(9000.0, 0.0);
    let reqs = [
        request(0, 60.0, far, offset(9000.0, 3000.0)),
        request(1, 160.0, offset(8000.0, 0.0), offset(8000.0, 2000.0)),
    ];
    let out = run_at(config(Mode::React, 2, 0.0, 3600.0), &reqs, &g, vec![v0, v1]);
    assert!(!out.outcomes[0].accepted);
    let first = out.transitions[0];
    assert_eq!((first.vehicle, first.from, first.to), (1, Phase::Idle, Phase::Repositioning));
    assert_eq!(first.time, 60.0);
    // the repositioning vehicle takes the second request and flips to touring
    assert!(out.outcomes[1].accepted);
    assert_eq!(out.outcomes[1].vehicle_id, Some(1));
    let second = out.transitions[1];
    assert_eq!((second.vehicle, second.from, second.to), (1, Phase::Repositioning, Phase::Touring));
    assert!(out.report.repositioning_travel_s > 0.0);

    // the same stream without REACT moves nobody on rejection
    let none = run_at(config(Mode::None, 2, 0.0, 3600.0), &reqs, &g, vec![v0, v1]);
    assert!(none.transitions.iter().all(|t| t.to != Phase::Repositioning));
}

#[test]
fn fdr_tick_count_covers_warmup_and_day() {
    let g = grid(3000.0);
    let reqs = [request(0, 50.0, offset(100.0, 100.0), offset(2000.0, 2000.0))];
    let cfg = config(Mode::Fdr, 2, 6.0 * 3600.0, 86_400.0);
    assert_eq!(cfg.tick_count(), 86_400 / 180 + 6 * 3600 / 180);
    let out = run_at(cfg.clone(), &reqs, &g, vec![base_point(); 2]);
    assert_eq!(out.audit.len(), cfg.tick_count());
    assert!(out.audit.windows(2).all(|w| w[1].time - w[0].time == 180.0));
}

#[test]
fn fdr_tick_sends_vehicle_to_pool_target() {
    let g = grid(5000.0);
    let v = offset(500.0, 500.0);
    let hot = offset(4500.0, 500.0);
    let mut reqs = vec![request(0, 10.0, hot, offset(500.0, 4000.0))];
    for k in 0..4 {
        reqs.push(request(k + 1, 1000.0 + 60.0 * k as f64, hot, offset(500.0, 4000.0)));
    }
    let out = run_at(config(Mode::Fdr, 1, 0.0, 3600.0), &reqs, &g, vec![v]);
    // first request is out of reach and rejected; the first tick after it moves the vehicle
    assert!(!out.outcomes[0].accepted);
    let t = out.transitions[0];
    assert_eq!((t.from, t.to), (Phase::Idle, Phase::Repositioning));
    assert_eq!(t.time, 180.0);
    let arrive = out.transitions[1];
    assert_eq!((arrive.from, arrive.to), (Phase::Repositioning, Phase::Idle));
    assert!((arrive.time - (180.0 + secs(v, hot))).abs() < 1e-6);
    assert!(out.outcomes[1..].iter().all(|o| o.accepted));
    let plan = out.audit.iter().find(|a| a.time == 180.0).unwrap();
    assert_eq!(plan.plan_size, 1);
    assert!(plan.solve_ms >= 0.0);
}

fn random_stream(rng: &mut ChaCha8Rng, n: usize, side_m: f64, until: f64) -> Vec<TripRequest> {
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..until)).collect();
    times.sort_by(f64::total_cmp);
    times
        .into_iter()
        .enumerate()
        .map(|(k, t)| {
            let o = offset(rng.gen_range(0.0..side_m), rng.gen_range(0.0..side_m));
            let d = offset(rng.gen_range(0.0..side_m), rng.gen_range(0.0..side_m));
            TripRequest {
                id: k as u64,
                request_time: t,
                origin: o,
                destination: d,
                passengers: rng.gen_range(1..=2),
            }
        })
        .collect()
}

/// Replays the transition log to phase counts at each sampled minute.
fn replay_counts(out: &SimOutput, fleet: usize, day_start: f64) -> Vec<(u32, u32, u32)> {
    let mut phase = vec![Phase::Idle; fleet];
    let mut k = 0;
    let mut counts = Vec::new();
    for m in 0..out.report.series.len() {
        let t = day_start + 60.0 * m as f64;
        while k < out.transitions.len() && out.transitions[k].time <= t {
            let tr = out.transitions[k];
            assert_eq!(phase[tr.vehicle], tr.from, "log disagrees with itself");
            phase[tr.vehicle] = tr.to;
            k += 1;
        }
        let c = |p| phase.iter().filter(|&&x| x == p).count() as u32;
        counts.push((c(Phase::Idle), c(Phase::Touring), c(Phase::Repositioning)));
    }
    counts
}

#[test]
fn invariants_over_random_streams() {
    let params = DispatchParams::default();
    for seed in 0..9u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 4000.0;
        let (warm, dur) = (1800.0, 5400.0);
        let n = rng.gen_range(20..120);
        let reqs = random_stream(&mut rng, n, side, warm + dur + 600.0);
        let fleet = rng.gen_range(2..9);
        let mode = [Mode::None, Mode::React, Mode::Fdr][seed as usize % 3];
        let mut cfg = config(mode, fleet, warm, dur);
        cfg.forecast = (mode == Mode::Fdr).then_some(ForecastKind::Naive);
        cfg.seed = seed;
        let g = grid(side);
        let tt = TravelTimeProvider::constant_speed(SPEED);
        let out = simulate(cfg.clone(), &reqs, &g, &tt, None).unwrap();

        let in_day = reqs.iter().filter(|r| r.request_time >= warm && r.request_time < warm + dur).count();
        let r = &out.report;
        assert_eq!(r.accepted + r.rejected, in_day as u64, "seed {seed}");
        assert_eq!(out.outcomes.len(), in_day);
        for o in &out.outcomes {
            let req = &reqs[o.request_id as usize];
            if !o.accepted {
                assert!(o.pickup_time.is_none() && o.dropoff_time.is_none());
                continue;
            }
            let (p, d) = (o.pickup_time.unwrap(), o.dropoff_time.unwrap());
            assert!(o.waiting_s().unwrap() <= params.max_wait_s + 1e-6, "seed {seed}: wait {:?}", o.waiting_s());
            assert!(o.waiting_s().unwrap() >= 0.0);
            assert!(p + params.dwell_s <= d + 1e-9, "pickup after dropoff");
            let ride = d - (p + params.dwell_s);
            let limit = params.ride_factor * secs(req.origin, req.destination) + params.ride_buffer_s;
            assert!(ride <= limit + 1e-6, "seed {seed}: ride {ride} > {limit}");
            // restarted legs interpolate in lat/lon, which can shave a few
            // microseconds off the great-circle remainder
            let direct = secs(req.origin, req.destination);
            assert!(ride >= direct * (1.0 - 1e-5), "seed {seed}: ride {ride} direct {direct}");
        }
        assert_eq!(r.series.len(), 90);
        let replayed = replay_counts(&out, fleet, warm);
        for (row, c) in r.series.iter().zip(&replayed) {
            assert_eq!(row.idle + row.touring + row.repositioning, fleet as u32);
            assert_eq!((row.idle, row.touring, row.repositioning), *c, "seed {seed} minute {}", row.minute);
        }
        let rej: u32 = r.series.iter().map(|s| s.rejections).sum();
        let reqn: u32 = r.series.iter().map(|s| s.requests).sum();
        assert_eq!((reqn as u64, rej as u64), (r.total_requests, r.rejected));
        for t in &out.transitions {
            let ok = matches!(
                (t.from, t.to),
                (Phase::Idle, Phase::Touring)
                    | (Phase::Idle, Phase::Repositioning)
                    | (Phase::Repositioning, Phase::Idle)
                    | (Phase::Repositioning, Phase::Touring)
                    | (Phase::Touring, Phase::Idle)
            );
            assert!(ok, "illegal transition {t:?}");
        }
        if mode == Mode::None {
            assert!(out.transitions.iter().all(|t| t.to != Phase::Repositioning));
            assert_eq!(r.repositioning_travel_s, 0.0);
        }
        assert!(r.total_vehicle_travel_s >= r.repositioning_travel_s);
        recompute_from_ledger(r, &out);
    }
}

/// Scalars recomputed independently from the per-request ledger.
fn recompute_from_ledger(r: &KpiReport, out: &SimOutput) {
    let total = out.outcomes.len() as u64;
    let accepted = out.outcomes.iter().filter(|o| o.accepted).count() as u64;
    assert_eq!((r.total_requests, r.accepted), (total, accepted));
    let mut waits: Vec<f64> = out
        .outcomes
        .iter()
        .filter_map(|o| o.pickup_time.map(|p| p - o.request_time))
        .collect();
    waits.sort_by(f64::total_cmp);
    if waits.is_empty() {
        assert_eq!(r.mean_waiting_s, None);
        return;
    }
    let mean = waits.iter().sum::<f64>() / waits.len() as f64;
    let n = waits.len();
    let median = if n % 2 == 1 {
        waits[n / 2]
    } else {
        0.5 * (waits[n / 2 - 1] + waits[n / 2])
    };
    assert_eq!(r.mean_waiting_s, Some(mean));
    assert_eq!(r.median_waiting_s, Some(median));
    let rate = if total == 0 { 0.0 } else { (total - accepted) as f64 / total as f64 };
    assert_eq!(r.rejection_rate, rate);
}

#[test]
fn identical_runs_are_bit_identical() {
    let p = SynthParams::two_clusters(0.0, 3.0 * 3600.0, 11);
    let reqs = generate(&p);
    let g = p.grid(1000.0);
    let tt = TravelTimeProvider::constant_speed(8.33);
    for mode in [Mode::React, Mode::Fdr] {
        let mut cfg = config(mode, 40, 3600.0, 7200.0);
        cfg.record_transitions = false;
        let a = simulate(cfg.clone(), &reqs, &g, &tt, None).unwrap();
        let b = simulate(cfg, &reqs, &g, &tt, None).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.report.write_json(&mut ja).unwrap();
        b.report.write_json(&mut jb).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn fdr_without_forecast_is_a_startup_error() {
    let g = grid(2000.0);
    let mut cfg = config(Mode::Fdr, 1, 0.0, 600.0);
    cfg.forecast = None;
    let tt = TravelTimeProvider::constant_speed(SPEED);
    assert!(simulate(cfg, &[], &g, &tt, None).is_err());
}

#[test]
fn fleet_placement_draws_from_first_hour_origins() {
    let g = grid(5000.0);
    let early = offset(1000.0, 1000.0);
    let late = offset(4000.0, 4000.0);
    let reqs = [
        request(0, 100.0, early, late),
        request(1, 5000.0, late, early),
    ];
    let tt = TravelTimeProvider::constant_speed(SPEED);
    let out = simulate(config(Mode::None, 6, 3600.0, 3600.0), &reqs, &g, &tt, None).unwrap();
    assert_eq!(out.initial_positions.len(), 6);
    assert!(out.initial_positions.iter().all(|&p| p == early));
}
