use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tmcqc_cli::experiment::solve_once;
use tmcqc_cli::{run_experiment, validate, CliError, CliResult, ExperimentConfig, ExperimentReport};

#[derive(Parser)]
#[command(name = "tmcqc", version, about = "Time-marching LCU circuits for 1D advection-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one march at the first epsilon of the config.
    Solve(RunArgs),
    /// Run the full parameter grid of the config.
    Sweep(RunArgs),
    /// Check feasibility without simulating anything.
    Validate(ConfigArgs),
    /// Summarize a finished run from its report.json.
    Report {
        /// Output directory of an earlier solve or sweep.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    cfg.check()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn emit(report: &ExperimentReport, dir: &Path, format: Format) -> CliResult<()> {
    let written = report.write(dir, format == Format::Csv)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Csv => {
            print!("{}", report.summary());
            println!("wrote {} file(s) to {}", written.len(), dir.display());
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = load(&args.base)?;
            let dir = out_dir(&cfg, &args);
            emit(&solve_once(&cfg)?, &dir, args.base.format)
        }
        Command::Sweep(args) => {
            let cfg = load(&args.base)?;
            let dir = out_dir(&cfg, &args);
            let report = run_experiment(&cfg, args.threads)?;
            emit(&report, &dir, args.base.format)?;
            if report.failures > 0 {
                eprintln!("{} grid point(s) failed; see the status column", report.failures);
            }
            Ok(())
        }
        Command::Validate(args) => {
            let cfg = load(&args)?;
            let v = validate(&cfg)?;
            match args.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&v)?),
                Format::Csv => print!("{}", v.render()),
            }
            match v.first_failure {
                Some(e) => Err(CliError::Core(e)),
                None => Ok(()),
            }
        }
        Command::Report { out, format } => {
            let report = ExperimentReport::load(&out)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Csv => print!("{}", report.summary()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
