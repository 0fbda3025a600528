use std::path::PathBuf;
use std::process::ExitCode;

use acv::cli::{self, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acv", version, about = "Accelerated primal-dual solvers and benchmarks")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm and write its convergence CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run several algorithms from the same start against one reference.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated algorithm names.
        #[arg(long)]
        algorithms: String,
    },
    /// Grid-search Condat-Vu step sizes.
    TuneCv {
        #[arg(long)]
        config: PathBuf,
        /// `primal`, `dual`, `primal:m1,m2,...` or `dual:e1,e2,...`.
        #[arg(long, default_value = "primal")]
        grid: String,
    },
    /// Check the step-size constraints of the configured schedule.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        /// Use the schedule constants exactly as originally printed.
        #[arg(long)]
        paper_literal: bool,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { config, output } => {
            println!("{}", cli::cmd_solve(&config, output.as_deref())?);
            Ok(())
        }
        Command::Compare { config, algorithms } => {
            let algorithms = cli::parse_algorithms(&algorithms)?;
            let outcome = cli::cmd_compare(&config, &algorithms)?;
            print!("{}", outcome.summary.render());
            outcome.failure.map_or(Ok(()), Err)
        }
        Command::TuneCv { config, grid } => {
            print!("{}", cli::cmd_tune_cv(&config, &grid)?);
            Ok(())
        }
        Command::Validate {
            config,
            horizon,
            paper_literal,
        } => {
            let (text, passed) = cli::cmd_validate(&config, horizon, paper_literal)?;
            print!("{text}");
            if passed {
                Ok(())
            } else {
                Err(CliError::Validation("one or more constraints violated".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
