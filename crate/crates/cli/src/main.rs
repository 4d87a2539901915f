use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fleetsim_cli::config::ScenarioConfig;
use fleetsim_cli::scenario::{ingest_check, run_matrix, run_scenario, ScenarioError, Strategy};
use fleetsim_core::validation::validate_solver;

#[derive(Parser)]
#[command(name = "fleetsim", version, about = "Ride-sharing fleet simulation with idle vehicle repositioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every strategy at every fleet factor and write summary.csv.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated: none, react, fdr, fdr-perfect, fdr-naive.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Compare the MIP solver against brute force on random small instances.
    ValidateSolver {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where mismatching instances are written.
        #[arg(long, default_value = ".")]
        dump_dir: PathBuf,
    },
    /// Parse and filter the dataset, then report what was kept.
    IngestCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn fail(e: ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, force, out } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_scenario(&cfg, out.as_deref(), force) {
                Ok(r) => {
                    let rep = &r.report;
                    println!(
                        "{}: {} requests, rejection rate {:.4}, mean wait {}, mean vehicle travel {:.1} s ({:.1} s wall)",
                        r.output_dir.display(),
                        rep.total_requests,
                        rep.rejection_rate,
                        rep.mean_waiting_s.map_or("n/a".to_string(), |w| format!("{w:.1} s")),
                        rep.mean_vehicle_travel_s,
                        r.wall_s
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Matrix {
            config,
            modes,
            factors,
            jobs,
            out,
            force,
        } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let mut strategies = Vec::new();
            for m in &modes {
                match Strategy::parse(m) {
                    Some(s) => strategies.push(s),
                    None => {
                        eprintln!("error: unknown mode `{m}`");
                        return ExitCode::from(2);
                    }
                }
            }
            if strategies.is_empty() || factors.is_empty() {
                eprintln!("error: --modes and --factors must not be empty");
                return ExitCode::from(2);
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            match run_matrix(&cfg, &strategies, &factors, jobs, &out, force) {
                Ok(rows) => {
                    let failed = rows.iter().filter(|r| r.result.is_err()).count();
                    println!("{} runs, {failed} failed; summary in {}", rows.len(), out.join("summary.csv").display());
                    if failed > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::ValidateSolver { count, seed, dump_dir } => {
            match validate_solver(count, seed, Some(&dump_dir)) {
                Ok(rep) => {
                    println!(
                        "{} instances, seed {}: max deviation {:.3e}, {} mismatches, {:.2} s",
                        rep.count,
                        rep.seed,
                        rep.max_deviation,
                        rep.mismatches.len(),
                        rep.elapsed_s
                    );
                    for m in &rep.mismatches {
                        println!(
                            "  instance {}: solver {:?} vs brute force {:?} -> {}",
                            m.index,
                            m.mip_objective,
                            m.brute_objective,
                            m.dump.as_ref().map_or("not dumped".to_string(), |p| p.display().to_string())
                        );
                    }
                    if rep.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::IngestCheck { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match ingest_check(&cfg) {
                Ok(r) => {
                    let d = &r.dropped;
                    println!("kept {} requests", r.kept);
                    println!(
                        "dropped {}: malformed {}, zero passengers {}, same location {}, outside bbox {}, outside window {}",
                        d.total(),
                        d.malformed,
                        d.zero_passengers,
                        d.same_location,
                        d.outside_bbox,
                        d.outside_window
                    );
                    if let (Some(a), Some(b)) = (r.first_request, r.last_request) {
                        println!("requests from {a} to {b}");
                    }
                    println!("day starts at {}; grid {} x {}", r.day_start, r.grid_rows, r.grid_cols);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
