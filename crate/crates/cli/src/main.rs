//! `screenopt`: batch front end for the screening solver.

mod compare;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

/// Exit code for a run whose solver stopped before converging.
const EXIT_NONCONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "screenopt",
    version,
    about = "Discrete screening problems with an aversion dimension"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a configured problem and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed recorded with the solver settings.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Objective and field differences between two run directories.
    Compare { a: PathBuf, b: PathBuf },
    /// Validate a config without solving.
    Check { config: PathBuf },
}

/// Applies SCREENOPT_THREADS to the global rayon pool.
fn configure_threads() -> Result<()> {
    let Ok(val) = std::env::var("SCREENOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = val
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("SCREENOPT_THREADS must be a positive integer, got {val:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out, seed } => {
            let (mut cfg, base) = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.solver.seed = s;
            }
            let out = out
                .or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)))
                .unwrap_or_else(|| PathBuf::from("out"));
            let problem = cfg.prepare(&base)?;
            let outcome = run::run(&problem, &out)?;
            println!("objective {:.12} -> {}", outcome.objective, out.display());
            if !outcome.converged {
                eprintln!("warning: solver did not converge");
                return Ok(EXIT_NONCONVERGED);
            }
        }
        Command::Compare { a, b } => {
            let cmp = compare::compare(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
        }
        Command::Check { config } => {
            let (cfg, base) = RunConfig::load(&config)?;
            let problem = cfg.prepare(&base)?;
            println!("ok: {} nodes, {} unknowns", problem.grid.len(), problem.qp.n_unknowns());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
