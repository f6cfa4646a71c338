use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pimlite_core::apps::{BenchmarkKind, BenchmarkSpec};
use pimlite_core::harness::{self, ExperimentConfig, RunOutcome, Scaling, VerifyOptions};
use pimlite_core::ReductionPolicy;

/// Benchmarks and checks for the simulated processing-in-memory framework.
#[derive(Parser)]
#[command(name = "pimlite", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark over a list of core counts and emit CSV rows.
    Run(RunArgs),
    /// Run the oracle and property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: BenchmarkKind,
    /// Comma-separated core counts.
    #[arg(long, value_delimiter = ',', required = true)]
    cores: Vec<usize>,
    #[arg(long, value_parser = parse_scaling, default_value = "weak")]
    scaling: Scaling,
    /// Elements per core (per core at the smallest count for strong scaling).
    #[arg(long)]
    elems: usize,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    #[arg(long, default_value_t = 10)]
    dims: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, value_parser = parse_variant, default_value = "auto")]
    variant: ReductionPolicy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record every transfer, to `<out>.transfers.log` or stderr.
    #[arg(long)]
    log_transfers: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random configurations per benchmark.
    #[arg(long, default_value_t = VerifyOptions::default().oracle_configs)]
    configs: usize,
    /// Fuzzed communication cases.
    #[arg(long, default_value_t = VerifyOptions::default().comm_cases)]
    comm_cases: usize,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    seed: u64,
}

fn parse_benchmark(s: &str) -> Result<BenchmarkKind, String> {
    s.parse()
}

fn parse_scaling(s: &str) -> Result<Scaling, String> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<ReductionPolicy, String> {
    s.parse()
}

fn log_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".transfers.log");
    PathBuf::from(name)
}

fn write_log(sink: &mut dyn Write, outcome: &RunOutcome) -> io::Result<()> {
    writeln!(
        sink,
        "# {} cores={}",
        outcome.row.benchmark, outcome.row.cores
    )?;
    for record in &outcome.transfers {
        writeln!(sink, "{record}")?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let spec = BenchmarkSpec {
        bins: args.bins,
        dims: args.dims,
        clusters: args.clusters,
        iterations: args.iters,
        seed: args.seed,
        ..BenchmarkSpec::new(args.benchmark, 0)
    };
    let mut config = ExperimentConfig::new(spec, args.elems, args.cores, args.scaling);
    config.variant = args.variant;

    let mut log: Option<Box<dyn Write>> = match (args.log_transfers, &args.out) {
        (false, _) => None,
        (true, Some(out)) => Some(Box::new(BufWriter::new(File::create(log_path(out))?))),
        (true, None) => Some(Box::new(io::stderr().lock())),
    };
    let mut log_error = None;
    let rows = harness::run_experiment_with(&config, args.log_transfers, |outcome| {
        if let Some(sink) = log.as_mut() {
            if let Err(e) = write_log(sink.as_mut(), outcome) {
                log_error.get_or_insert(e);
            }
        }
        eprintln!(
            "{} cores={} elems={} correct={} dram<->scratch={} B",
            outcome.row.benchmark,
            outcome.row.cores,
            outcome.row.total_elems,
            outcome.row.correct,
            outcome.row.dram_scratch_bytes()
        );
    })?;
    if let Some(mut sink) = log {
        sink.flush()?;
    }
    if let Some(e) = log_error {
        return Err(e.into());
    }
    match &args.out {
        Some(path) => harness::emit_csv(&rows, path)?,
        None => harness::write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> bool {
    let summary = harness::verify_with(&VerifyOptions {
        oracle_configs: args.configs,
        comm_cases: args.comm_cases,
        seed: args.seed,
    });
    println!("{summary}");
    summary.passed()
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Verify(args) => {
            if verify(args) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
