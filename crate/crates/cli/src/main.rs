use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twouta_cli::{
    cmd_gen, cmd_plot, cmd_run, cmd_sweep, load_scenario, load_transcript, parse_counts, parse_plane, to_json,
    write_text, CliError, PlotSource,
};
use twouta_core::scenario::{GeneratorParams, PairMode};
use twouta_core::Rational;

#[derive(Parser)]
#[command(name = "twouta", version, about = "Identify two anonymous additive value models from matching queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario.
    Gen(GenArgs),
    /// Run the elicitation against a scenario's simulated decision-makers.
    Run(RunArgs),
    /// Export indifference curves of one criteria plane.
    Plot(PlotArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct LatticeArgs {
    /// Slope numerators are drawn from 1..=slope-max.
    #[arg(long, default_value_t = 12)]
    slope_max: i64,
    #[arg(long, default_value_t = 4)]
    slope_denom: i64,
    /// Breakpoint step numerators are drawn from 1..=step-max.
    #[arg(long, default_value_t = 4)]
    step_max: i64,
    #[arg(long, default_value_t = 2)]
    step_denom: i64,
}

#[derive(Args)]
struct GenArgs {
    /// Number of criteria; defaults to the length of --breakpoints.
    #[arg(long)]
    criteria: Option<usize>,
    /// Interval counts per criterion, e.g. "2,3". A single value applies to every criterion.
    #[arg(long, default_value = "2,2")]
    breakpoints: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep a second model even if it is equivalent to the first.
    #[arg(long)]
    allow_identical: bool,
    /// Duplicate the first model.
    #[arg(long, conflicts_with = "allow_identical")]
    identical: bool,
    /// Resample until cross-model slope ratios differ across criteria.
    #[arg(long, conflicts_with_all = ["allow_identical", "identical"])]
    generic: bool,
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Write the transcript (one JSON object per line).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Write the report (stdout if absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Answer from a recorded transcript instead of the simulated pair.
    #[arg(long, conflicts_with = "sweep")]
    replay: Option<PathBuf>,
    /// Residual tolerance of the disambiguation checks.
    #[arg(long)]
    epsilon: Option<String>,
    /// Run N generated scenarios shaped like --scenario, seeds from its seed on.
    #[arg(long)]
    sweep: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, required_unless_present = "report", conflicts_with = "report")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Criteria indices, e.g. "0,1".
    #[arg(long, default_value = "0,1")]
    plane: String,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<ExitCode, CliError> {
    let mut intervals = parse_counts(&args.breakpoints)?;
    if let Some(n) = args.criteria {
        match intervals.len() {
            1 => intervals = vec![intervals[0]; n],
            len if len != n => {
                return Err(CliError(format!("--criteria {n} disagrees with {len} interval counts")));
            }
            _ => {}
        }
    }
    let mode = if args.identical {
        PairMode::Identical
    } else if args.allow_identical {
        PairMode::AllowIdentical
    } else if args.generic {
        PairMode::Generic
    } else {
        PairMode::Distinct
    };
    let params = GeneratorParams {
        intervals,
        slope_max: args.lattice.slope_max,
        slope_denom: args.lattice.slope_denom,
        step_max: args.lattice.step_max,
        step_denom: args.lattice.step_denom,
        mode,
    };
    emit(&args.out, &cmd_gen(&params, args.seed)?.to_json())?;
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    if let Some(count) = args.sweep {
        let params = GeneratorParams::new(scenario.grid.interval_counts());
        let entries = cmd_sweep(&params, scenario.seed.unwrap_or(0), count)?;
        for e in &entries {
            eprintln!(
                "seed {:>6}  {:?}  queries {:>4}  {}",
                e.seed,
                e.report.outcome,
                e.report.query_count,
                if e.report.is_exact_match() { "exact match" } else { "MISMATCH" }
            );
        }
        emit(&args.report, &to_json(&entries))?;
        let all = entries.iter().all(|e| e.report.is_exact_match());
        return Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }
    let replay = args.replay.as_deref().map(load_transcript).transpose()?;
    let epsilon = args
        .epsilon
        .as_deref()
        .map(|e| e.parse::<Rational>())
        .transpose()
        .map_err(CliError::from)?;
    let out = cmd_run(&scenario, replay, epsilon)?;
    if let Some(p) = &args.transcript {
        write_text(p, &out.transcript.to_jsonl())?;
    }
    emit(&args.report, &out.report.to_json())?;
    if let Some(f) = &out.report.failure {
        eprintln!("elicitation failed [{}]: {}", f.code, f.message);
    }
    Ok(if out.report.is_exact_match() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn plot(args: PlotArgs) -> Result<ExitCode, CliError> {
    let source = match (args.scenario, args.report) {
        (Some(s), _) => PlotSource::Scenario(s),
        (None, Some(r)) => PlotSource::Report(r),
        (None, None) => return Err(CliError("one of --scenario or --report is required".into())),
    };
    let data = cmd_plot(&source, parse_plane(&args.plane)?, args.levels)?;
    emit(&args.out, &to_json(&data))?;
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode, CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr).await.map_err(|e| CliError(format!("{}: {e}", args.addr)))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError(e.to_string()))?);
        twouta_service::serve(listener).await.map_err(|e| CliError(e.to_string()))
    })?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Plot(a) => plot(a),
        Command::Serve(a) => serve(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
