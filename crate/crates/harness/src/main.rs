use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use covdbm_harness::{emit_summary, run_experiment, ExperimentConfig, HarnessError, Pipeline};

#[derive(Parser)]
#[command(name = "covdbm", version, about = "Run covariance DBM experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline named in the config.
    Simulate(RunArgs),
    Freeconv(RunArgs),
    Locallaw(RunArgs),
    Shortrange(RunArgs),
    Gaps(RunArgs),
    Correlation(RunArgs),
    /// Verify the artifacts of a finished run and print its summary.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Print the checks as CSV instead of the table.
        #[arg(long)]
        csv: bool,
    },
}

fn simulate(args: RunArgs, pipeline: Option<Pipeline>) -> Result<bool, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(p) = pipeline {
        cfg.pipeline = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.output = std::env::current_dir()?.join(o);
    }
    let manifest = run_experiment(&cfg)?;
    let summary = emit_summary(&cfg.output_dir())?;
    print!("{}", summary.table);
    Ok(covdbm_harness::run::all_passed(&manifest))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, None),
        Command::Freeconv(a) => simulate(a, Some(Pipeline::Freeconv)),
        Command::Locallaw(a) => simulate(a, Some(Pipeline::Locallaw)),
        Command::Shortrange(a) => simulate(a, Some(Pipeline::Shortrange)),
        Command::Gaps(a) => simulate(a, Some(Pipeline::Gaps)),
        Command::Correlation(a) => simulate(a, Some(Pipeline::Correlation)),
        Command::Report { out, csv } => emit_summary(&out).map(|s| {
            print!("{}", if csv { s.csv } else { s.table });
            true
        }),
    };
    match result {
        Ok(passed) => {
            if !passed {
                eprintln!("some checks failed");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
