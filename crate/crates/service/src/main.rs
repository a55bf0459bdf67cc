use std::fs;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use proxigraph_core::proximity::{PipelineConfig, ProximityModel};
use proxigraph_core::sim::{calibrate_default, score_detection, Scenario, SimRun, NEAR_THRESHOLD_M};
use proxigraph_core::wire::{EventEnvelope, Payload};
use proxigraph_service::{ServiceConfig, TraceService};

/// Ground-truth episodes shorter than this are ignored when scoring.
const SCORE_MIN_DWELL_MS: i64 = 30_000;

#[derive(Parser)]
#[command(name = "proxigraph", version, about = "Workplace proximity detection and contact tracing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trace service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, env = "PROXIGRAPH_DATA_DIR")]
        data_dir: PathBuf,
        /// TOML service configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Serve the admin console's static build from this directory.
        #[arg(long, value_name = "DIR")]
        with_console: Option<PathBuf>,
    },
    /// Simulate a scenario and write its radio streams, ground truth and logs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also run every device pipeline and write events.jsonl, notices.jsonl and score.json.
        #[arg(long)]
        detect: bool,
        /// Classifier JSON (as written by `calibrate`); defaults to the shipped model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit the proximity classifier on the default simulated office.
    Calibrate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the model JSON here; the report always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let result = match Cli::parse().command {
        Command::Serve { port, bind, data_dir, config, with_console } => {
            serve(SocketAddr::new(bind, port), &data_dir, config.as_deref(), with_console.as_deref())
        }
        Command::Simulate { scenario, seed, out, detect, model } => {
            simulate(&scenario, seed, &out, detect, model.as_deref())
        }
        Command::Calibrate { seed, out } => calibrate(seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(addr: SocketAddr, data_dir: &Path, config: Option<&Path>, console: Option<&Path>) -> CliResult {
    let config = match config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(dir) = console {
        if !dir.join("index.html").is_file() {
            return Err(format!("{} has no index.html", dir.display()).into());
        }
    }
    let service = Arc::new(TraceService::open(data_dir, config)?);
    let snapshot = service.snapshot();
    tracing::info!(
        data_dir = %data_dir.display(),
        events = snapshot.event_count,
        nodes = snapshot.graph.node_count(),
        edges = snapshot.graph.edge_count(),
        "replayed event log"
    );
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(proxigraph_service::http::serve(service, addr, console))?;
    Ok(())
}

fn simulate(scenario: &Path, seed: Option<u64>, out: &Path, detect: bool, model: Option<&Path>) -> CliResult {
    let mut scenario = Scenario::from_toml(&fs::read_to_string(scenario)?)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let run = SimRun::new(scenario)?;
    let output = run.output();
    output.write_dir(out)?;
    println!("wrote {} to {}", ["rssi.csv", "positions.csv", "access_log.csv", "tokens.csv", "roster.csv"].join(", "), out.display());
    if !detect {
        return Ok(());
    }

    let model = match model {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ProximityModel::shipped(),
    };
    let results = run.detect(&model, &PipelineConfig::default())?;
    let mut events = BufWriter::new(fs::File::create(out.join("events.jsonl"))?);
    let mut notices = BufWriter::new(fs::File::create(out.join("notices.jsonl"))?);
    let mut all = Vec::new();
    for (owner, result) in &results {
        for e in &result.events {
            writeln!(events, "{}", EventEnvelope::proximity(e, e.end_ms).to_line())?;
        }
        for n in &result.notices {
            writeln!(notices, "{}", serde_json::json!({ "device": owner, "notice": n }))?;
        }
        all.extend(result.events.iter().cloned());
    }
    for entry in &output.access_logs {
        writeln!(events, "{}", EventEnvelope::new(&Payload::AccessLog(entry.clone()), entry.exit_ms).to_line())?;
    }
    events.flush()?;
    notices.flush()?;
    let score = score_detection(&all, run.ground_truth(), NEAR_THRESHOLD_M, SCORE_MIN_DWELL_MS);
    fs::write(out.join("score.json"), serde_json::to_string_pretty(&score)?)?;
    println!(
        "{} events, {} episodes, precision {:.3}, recall {:.3}",
        score.events, score.episodes, score.precision, score.recall
    );
    Ok(())
}

fn calibrate(seed: u64, out: Option<&Path>) -> CliResult {
    let report = calibrate_default(seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&report.model)?)?;
    }
    Ok(())
}
