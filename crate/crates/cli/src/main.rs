use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

/// Minimum-jerk trajectories on a sphere: solve, simulate, analyze, report.
#[derive(Debug, Parser)]
#[command(name = "sphere-minjerk", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the constrained minimum-jerk problem between two targets.
    Solve {
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
        from: u8,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
        to: u8,
        /// Solver tolerance (overrides `solver.tol`).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Simulate the experiment and write one trial log per subject.
    Simulate {
        /// First subject seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of subjects, seeded consecutively from the first seed.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
    },
    /// Measure every movement in the given logs and run the population statistics.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Print the text report for a summary written by `analyze`.
    Report {
        /// `summary.json` or a directory containing it (default: the output directory).
        summary: Option<PathBuf>,
    },
}

/// An error with a chosen exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const NUMERICAL: u8 = 1;
    pub const USAGE: u8 = 2;

    pub fn usage(message: impl Into<String>) -> anyhow::Error {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
        .into()
    }

    pub fn numerical(message: impl Into<String>) -> anyhow::Error {
        Self {
            code: Self::NUMERICAL,
            message: message.into(),
        }
        .into()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<Failure>())
                .map_or(Failure::NUMERICAL, |f| f.code);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::RunConfig::load(cli.config.as_deref()).map_err(Failure::usage)?;
    let problems = cfg.problems();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        return Err(Failure::usage(format!("invalid configuration:\n{}", list.join("\n"))));
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    match cli.command {
        Command::Solve { from, to, tol } => commands::solve(&cfg, &out, from.into(), to.into(), tol),
        Command::Simulate { seed, count } => commands::simulate(&cfg, &out, seed.unwrap_or(cfg.seed), count),
        Command::Analyze { logs } => commands::analyze(&cfg, &out, &logs),
        Command::Report { summary } => commands::report(&out, summary.as_deref()),
    }
}
