use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use randsum_cli::{cmd_compare, cmd_fit, cmd_ingest, cmd_mc_study, cmd_simulate, IngestArgs, EXIT_INPUT};

/// Random-sum panel models: simulation, quasi-likelihood fitting and model comparison.
#[derive(Parser)]
#[command(name = "randsum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model spec to a panel CSV.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        effects: Option<PathBuf>,
    },
    /// Monte Carlo replication study.
    McStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rank model specs on one panel by QAIC.
    Compare {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, num_args = 2.., required = true)]
        specs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a panel CSV from ring widths and site covariates.
    Ingest {
        #[arg(long)]
        rings: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        age_class: Option<usize>,
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        start: Option<i32>,
        #[arg(long)]
        end: Option<i32>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Fit { panel, spec, out, effects } => cmd_fit(&panel, &spec, &out, effects.as_deref()),
        Command::McStudy { config, reps, out, jobs } => cmd_mc_study(&config, reps, &out, jobs),
        Command::Compare { panel, specs, out } => cmd_compare(&panel, &specs, &out),
        Command::Ingest { rings, covariates, out, age_class, design, start, end } => {
            cmd_ingest(&IngestArgs { rings, covariates, out, age_class, design, start, end })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
