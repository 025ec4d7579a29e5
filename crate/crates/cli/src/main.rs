//! `descshelf`: batch runs of corpus generation, descriptor extraction,
//! shelf generation, and offline evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use commands::{CliError, ExitKind};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "descshelf", version, about = "Descriptive recommendation shelves")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides paths.output_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic corpus.
    GenCorpus,
    /// Extract descriptors for every catalog item.
    Extract,
    /// Generate shelf pages for every user.
    Shelves,
    /// Compare descriptive shelves with the generic baseline.
    Eval,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        cfg.paths.output_dir = dir;
    }
    cfg.validate().map_err(CliError::config)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::config(anyhow::anyhow!("--jobs must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(CliError::config)?;
    }
    match cli.command {
        Command::GenCorpus => commands::cmd_gen_corpus(&cfg),
        Command::Extract => commands::cmd_extract(&cfg),
        Command::Shelves => commands::cmd_shelves(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ExitKind::Config as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.kind as u8)
        }
    }
}
