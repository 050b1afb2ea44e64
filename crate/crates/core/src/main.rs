use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use qshuttle::analysis::{analyse, static_baseline_overlap, write_report};
use qshuttle::day::{run_day, DayConfig, DEFAULT_ANOMALY_RATE};
use qshuttle::scenario::{shared_corridor, Scenario};
use qshuttle::service::{read_events, Ledger, ServiceConfig, ARRIVAL_RECORD_RADIUS_M};
use qshuttle::solver::{
    BruteForceSolver, MockRemoteConfig, RemoteSolver, SimulatedAnnealingSolver, Solver, SolverKind, TabuHybridSolver,
    DEFAULT_MOCK_LATENCY_MS,
};

#[derive(Parser)]
#[command(name = "qshuttle", version, about = "Congestion-aware shuttle fleet navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "sa")]
    solver: SolverKind,
    /// Remote endpoint for `--solver remote`; the in-process mock when absent.
    #[arg(long)]
    remote_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MOCK_LATENCY_MS)]
    mock_latency_ms: u64,
    #[arg(long, default_value_t = 0.0)]
    mock_failure_rate: f64,
    #[arg(long, default_value_t = 5000)]
    remote_timeout_ms: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fleet service over HTTP.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 30.0)]
        update_interval_s: f64,
        #[arg(long, default_value_t = 120.0)]
        optimize_interval_s: f64,
        #[arg(long, default_value_t = 120.0)]
        time_filter_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Directory holding the event log.
        #[arg(long, env = "QSHUTTLE_LOG_DIR")]
        log_dir: Option<PathBuf>,
        /// Serve the operator console from this directory.
        #[arg(long)]
        console_dir: Option<PathBuf>,
    },
    /// Simulate a full service day as fast as possible.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ANOMALY_RATE)]
        anomaly_rate: f64,
        /// Event log directory; the report reads it afterwards.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Tick-level vehicle positions as JSON lines.
        #[arg(long)]
        telemetry: Option<PathBuf>,
        /// Write the analysis report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyse an event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Adds the static-route baseline.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Serve the mock remote solver over HTTP.
    MockRemote {
        #[arg(long, default_value = "127.0.0.1:8090")]
        listen: String,
        #[arg(long, default_value_t = DEFAULT_MOCK_LATENCY_MS)]
        latency_ms: u64,
        #[arg(long, default_value_t = 0.0)]
        failure_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the built-in shared-corridor scenario as JSON.
    Scenario {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_solver(args: &SolverArgs, seed: u64) -> Arc<dyn Solver> {
    let timeout = Duration::from_millis(args.remote_timeout_ms);
    match args.solver {
        SolverKind::Brute => Arc::new(BruteForceSolver),
        SolverKind::Sa => Arc::new(SimulatedAnnealingSolver::default()),
        SolverKind::Tabu => Arc::new(TabuHybridSolver::default()),
        SolverKind::Remote => match &args.remote_url {
            Some(url) => Arc::new(RemoteSolver::http(url, timeout)),
            None => Arc::new(RemoteSolver::mock(
                MockRemoteConfig { latency_ms: args.mock_latency_ms, failure_rate: args.mock_failure_rate, failure_seed: seed },
                timeout,
            )),
        },
    }
}

fn load_scenario(path: Option<&PathBuf>) -> Result<Scenario, Box<dyn std::error::Error>> {
    Ok(match path {
        Some(p) => Scenario::load(p)?,
        None => shared_corridor(),
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            scenario,
            solver,
            update_interval_s,
            optimize_interval_s,
            time_filter_s,
            seed,
            listen,
            log_dir,
            console_dir,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let mut config = ServiceConfig {
                update_interval_s,
                optimize_interval_s,
                time_slack_s: time_filter_s,
                seed,
                ..ServiceConfig::default()
            };
            if let Some(k) = scenario.route_count {
                config.route_count = k;
            }
            let service = qshuttle::service::FleetService::new(
                Arc::new(scenario.road_graph()?),
                scenario.line_specs(),
                scenario.vehicle_ids(),
                config,
                build_solver(&solver, seed),
            )?;
            let service = match log_dir {
                Some(dir) => service.with_event_log(&dir)?,
                None => service,
            };
            let console = match console_dir {
                Some(dir) => Some(std::fs::read_to_string(dir.join("index.html"))?),
                None => None,
            };
            let state = qshuttle::service::http::AppState::new(Arc::new(service), console);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(qshuttle::service::http::serve(&listen, qshuttle::service::http::router(state)))?;
        }
        Command::Simulate { scenario, solver, seed, anomaly_rate, log, telemetry, out } => {
            let scenario = load_scenario(scenario.as_ref())?;
            let mut config = DayConfig::new(build_solver(&solver, seed));
            config.seed = seed;
            config.service.seed = seed;
            config.anomaly_rate = anomaly_rate;
            config.event_log = log;
            config.telemetry = telemetry;
            let run = run_day(&scenario, config)?;
            println!("{}", serde_json::to_string_pretty(&run.report)?);
            if let Some(out) = out {
                let trips = run.service.trips();
                let baseline = static_baseline_overlap(run.service.graph(), &scenario.line_specs())?;
                let report = analyse(&trips, ARRIVAL_RECORD_RADIUS_M, Some(baseline));
                write_report(&report, &trips, ARRIVAL_RECORD_RADIUS_M, &out)?;
                println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                    "pairs": report.overlap.summary,
                    "baseline": report.baseline,
                    "valid": report.trip_stats.valid,
                    "invalid": report.trip_stats.invalid,
                }))?);
            }
        }
        Command::Report { log, out, scenario } => {
            let events = read_events(&log)?;
            let trips: Vec<_> = Ledger::replay(&events).trips.into_values().collect();
            let baseline = match scenario {
                Some(p) => {
                    let s = Scenario::load(&p)?;
                    Some(static_baseline_overlap(&s.road_graph()?, &s.line_specs())?)
                }
                None => None,
            };
            let report = analyse(&trips, ARRIVAL_RECORD_RADIUS_M, baseline);
            write_report(&report, &trips, ARRIVAL_RECORD_RADIUS_M, &out)?;
            println!("{}", serde_json::to_string_pretty(&report.overlap.summary)?);
        }
        Command::MockRemote { listen, latency_ms, failure_rate, seed } => {
            let remote = qshuttle::solver::MockRemote::new(MockRemoteConfig { latency_ms, failure_rate, failure_seed: seed });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(qshuttle::service::http::serve(&listen, qshuttle::service::http::mock_remote_router(Arc::new(remote))))?;
        }
        Command::Scenario { out } => {
            let json = shared_corridor().to_json();
            match out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
