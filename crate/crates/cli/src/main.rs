//! `rcc`: runs the benchmark sweeps and writes one result row per
//! (scheme, sweep value, seed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::info;

use rcc_core::config::RunConfig;
use rcc_core::experiment::{
    emit_results, emit_traces, run_points, summarize, ExperimentKind, ExperimentSpec, OutputFormat, Summary,
};
use rcc_core::par::Execution;
use rcc_core::scenarios::Scheme;
use rcc_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "rcc",
    version,
    about = "Beamforming sweeps for double active-RIS radar-communication coexistence"
)]
struct Args {
    /// JSON file with optional `scene`, `solver` and `scenario` sections.
    #[arg(long)]
    config: Option<PathBuf>,

    /// convergence, elements, location, power, eta or gamma.
    #[arg(long)]
    experiment: String,

    /// Comma-separated scheme names; defaults depend on the experiment.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,

    /// Use seeds 1..=N.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<u64>,

    /// Comma-separated explicit seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Vec<u64>,

    /// Comma-separated sweep values; defaults depend on the experiment.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    sweep: Vec<f64>,

    /// Result file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, default_value = "csv")]
    format: String,

    /// Also write the outer-loop traces of every point as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Print per-group mean rate and success fraction to standard error.
    #[arg(long)]
    summary: bool,

    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Run the points one after another.
    #[arg(long)]
    sequential: bool,
}

fn usage(e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Usage(msg),
        other => other,
    }
}

fn build_spec(args: &Args) -> Result<ExperimentSpec, Error> {
    let kind: ExperimentKind = args.experiment.parse()?;
    let format_ok: Result<OutputFormat, _> = args.format.parse();
    format_ok?;
    let run = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut spec = ExperimentSpec::new(kind, &run);
    if !args.schemes.is_empty() {
        spec.schemes = args
            .schemes
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(usage))
            .collect::<Result<_, _>>()?;
    }
    if let Some(n) = args.seeds {
        spec.seeds = (1..=n).collect();
    } else if !args.seed_list.is_empty() {
        spec.seeds = args.seed_list.clone();
    }
    if !args.sweep.is_empty() {
        spec.sweep = args.sweep.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> Result<(), Error> {
    let spec = build_spec(args)?;
    let format: OutputFormat = args.format.parse()?;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel { threads: args.threads }
    };
    let points = run_points(&spec, exec)?;
    let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
    emit_results(&rows, format, args.out.as_deref())?;
    if let Some(path) = &args.trace {
        emit_traces(&points, path)?;
    }
    if args.summary {
        eprintln!("{}", Summary::CSV_HEADER);
        for s in summarize(&rows) {
            eprintln!("{}", s.csv_row());
        }
    }
    info!("{} rows written", rows.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
