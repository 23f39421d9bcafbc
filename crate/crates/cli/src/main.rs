//! `elastic-mine`: build codebooks, mine under node budgets, report quality
//! and elasticity, and plan investments. Every file written carries a `#`
//! header with the tool version, the effective configuration and the seed.

mod bench;
mod code;
mod data;
mod mine;
mod output;
mod plan;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::output::Context;

/// Seed used when neither `--seed` nor `ELASTIC_MINE_SEED` is given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "elastic-mine",
    version,
    about = "Budget-elastic kNN classification and collaborative filtering"
)]
pub struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true, env = "ELASTIC_MINE_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads for batch mining; row order never depends on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    #[serde(skip)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate or split datasets.
    #[command(subcommand)]
    Data(data::DataCommand),
    /// Build or profile codebooks.
    #[command(subcommand)]
    Code(code::CodeCommand),
    /// Run elastic or baseline mining over a test file.
    #[command(subcommand)]
    Mine(mine::MineCommand),
    /// Quality, elasticity and resolution reports.
    #[command(subcommand)]
    Report(report::ReportCommand),
    /// Answer an investment query under fixed and/or spot pricing.
    Plan(plan::PlanArgs),
    /// Compare the elastic algorithm with the baselines under equal budgets.
    Bench(bench::BenchArgs),
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    anyhow::ensure!(cli.threads >= 1, "--threads must be at least 1");
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()?;
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Data(c) => data::run(c, &ctx),
        Command::Code(c) => code::run(c, &ctx),
        Command::Mine(c) => mine::run(c, &ctx),
        Command::Report(c) => report::run(c, &ctx),
        Command::Plan(a) => plan::run(a, &ctx),
        Command::Bench(a) => bench::run(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
