//! `driftcheck`: scenario-driven verification runs with deterministic
//! JSON/CSV reports.
//!
//! Exit codes: 0 when every check passes or is hypotheses-not-met, 2 when
//! any check is violated (or aborted on a numeric error), 1 on usage or
//! configuration errors.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use driftcheck_core::report::converge_csv;
use driftcheck_core::runner;
use driftcheck_core::scenario::{catalog_scenario, load_scenario, Scenario};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "driftcheck",
    about = "Eigenvalue-bound and hypersurface-stability checks on weighted manifolds",
    version
)]
struct Cli {
    /// Include per-check runtime_ms in reports (off by default so repeated
    /// runs are byte-identical).
    #[arg(long, global = true)]
    timings: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check a scenario requests and emit the JSON report.
    Run {
        /// Scenario file path, or the name of a shipped catalog scenario.
        scenario: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's refinement level count.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Per-level first-eigenvalue table with observed order (CSV).
    Converge {
        /// Scenario file path, or the name of a shipped catalog scenario.
        scenario: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped scenarios and the checks each exercises.
    Catalog,
    /// Lowest k eigenvalues on the finest mesh level (JSON).
    Spectrum {
        /// Scenario file path, or the name of a shipped catalog scenario.
        scenario: String,
        /// How many eigenvalues to compute.
        #[arg(long, short)]
        k: usize,
    },
}

fn resolve_scenario(name: &str) -> Result<Scenario> {
    let path = Path::new(name);
    if path.is_file() {
        return load_scenario(path).with_context(|| format!("loading scenario `{name}`"));
    }
    if let Some(sc) = catalog_scenario(name) {
        return Ok(sc);
    }
    Err(anyhow!(
        "`{name}` is neither a scenario file nor a catalog scenario name"
    ))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {path:?}"))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap's own exit code for bad usage is 2, which this tool reserves for
    // violated checks; fold usage errors into exit 1 instead
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { scenario, out, levels } => {
            let mut sc = resolve_scenario(&scenario)?;
            if let Some(levels) = levels {
                if levels < 2 {
                    return Err(anyhow!("--levels must be at least 2, got {levels}"));
                }
                sc.mesh.levels = levels;
            }
            let report = runner::run_scenario(&sc, cli.timings);
            let mut json = report.to_json();
            json.push('\n');
            emit(&json, out.as_deref())?;
            Ok(runner::exit_code(&report) as u8)
        }
        Command::Converge { scenario, out } => {
            let sc = resolve_scenario(&scenario)?;
            let rows = runner::converge(&sc)?;
            emit(&converge_csv(&rows), out.as_deref())?;
            Ok(0)
        }
        Command::Catalog => {
            print!("{}", runner::catalog_listing());
            Ok(0)
        }
        Command::Spectrum { scenario, k } => {
            let sc = resolve_scenario(&scenario)?;
            let sp = runner::spectrum(&sc, k)?;
            let mut json = sp.to_json();
            json.push('\n');
            emit(&json, None)?;
            Ok(0)
        }
    }
}
