//! Command-line front end for [`aimd_core`]: reads a TOML system description,
//! runs simulations, chain analyses, matrix property checks and the convex
//! oracle, and writes machine-readable reports with a digest manifest.
//!
//! Exit codes: 0 success, 1 validation failure, 2 property failure,
//! 3 missing input.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pretty;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::{ChainOptions, MatrixKind, Output};
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROPERTY: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "aimd", version, about = "AIMD multi-resource allocation toolkit")]
pub struct Cli {
    /// Print reports as aligned text instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the event-driven simulator and write trace.csv and summary.json.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        events: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the matrix laws by randomized trials.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Swap in a matrix builder that breaks strict contraction.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run the lifted Markov chain and report ergodic means.
    Chain {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also run a second chain from a skewed start and compare ergodic means.
        #[arg(long)]
        probe_uniqueness: bool,
        /// Also estimate the average contraction of sampled operator products.
        #[arg(long)]
        contraction: bool,
        /// Monte Carlo products for --contraction.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Pass threshold for the uniqueness distance, relative to the largest capacity.
        #[arg(long, default_value_t = 0.02)]
        threshold: f64,
        /// Ratio below which a product counts towards the pair mass.
        #[arg(long, default_value_t = 0.9)]
        mu: f64,
    },
    /// Solve for the social optimum.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare long-run means from `simulate` or `chain` against the optimum.
    Compare {
        config: PathBuf,
        /// summary.json or ergodic.json.
        #[arg(long)]
        means: PathBuf,
        /// oracle.json; solved on the fly when omitted.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Fail (exit 2) when some |mean − y*| exceeds this fraction of capacity.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matrix utilities.
    Matrix {
        #[command(subcommand)]
        action: MatrixAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum MatrixAction {
    /// Print a matrix as a JSON header line followed by decimal rows.
    Dump {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        resource: usize,
        /// One character per agent: 1 backs off, 0 keeps.
        #[arg(long)]
        pattern: String,
        #[arg(long, value_enum, default_value = "u")]
        kind: MatrixKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    let (name, loaded, out, output) = match &cli.command {
        Command::Simulate { config, events, seed, out } => {
            let cfg = config::load(config, *seed)?;
            let output = commands::simulate(&cfg, *events)?;
            ("simulate", cfg, Some(out.as_path()), output)
        }
        Command::Verify { config, trials, seed, out, inject_fault } => {
            let cfg = config::load(config, *seed)?;
            let output = commands::verify(&cfg, *trials, *inject_fault)?;
            ("verify", cfg, out.as_deref(), output)
        }
        Command::Chain { config, steps, seed, out, probe_uniqueness, contraction, samples, threshold, mu } => {
            let cfg = config::load(config, *seed)?;
            let opts = ChainOptions {
                steps: *steps,
                probe_uniqueness: *probe_uniqueness,
                contraction: *contraction,
                samples: *samples,
                threshold: *threshold,
                mu: *mu,
            };
            let output = commands::chain(&cfg, opts)?;
            ("chain", cfg, Some(out.as_path()), output)
        }
        Command::Oracle { config, tol, max_iters, out } => {
            let cfg = config::load(config, None)?;
            let output = commands::oracle(&cfg, *tol, *max_iters)?;
            ("oracle", cfg, out.as_deref(), output)
        }
        Command::Compare { config, means, oracle, tolerance, out } => {
            let cfg = config::load(config, None)?;
            let output = commands::compare(&cfg, means, oracle.as_deref(), *tolerance)?;
            ("compare", cfg, out.as_deref(), output)
        }
        Command::Matrix { action: MatrixAction::Dump { config, resource, pattern, kind, out } } => {
            let cfg = config::load(config, None)?;
            let output = commands::matrix_dump(&cfg, *resource, pattern, *kind)?;
            ("matrix dump", cfg, out.as_deref(), output)
        }
    };

    if let Some(dir) = out {
        write_outputs(dir, name, &loaded, &output, started)?;
    }
    print_report(&output, cli.pretty);
    Ok(if output.passed { EXIT_OK } else { EXIT_PROPERTY })
}

fn write_outputs(
    dir: &Path,
    name: &str,
    cfg: &LoadedConfig,
    output: &Output,
    started: Instant,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        tool: "aimd",
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        config: Some(cfg.path.display().to_string()),
        config_sha256: Some(cfg.digest.clone()),
        seed: Some(cfg.seed()),
        out_dir: dir.display().to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
        artifacts: Vec::new(),
    };
    manifest::write_all(dir, &output.artifacts, manifest)?;
    Ok(())
}

fn print_report(output: &Output, pretty: bool) {
    let text = match (&output.text, pretty) {
        (Some(text), _) => text.clone(),
        (None, true) => pretty::render(&output.report),
        (None, false) => String::from_utf8(report::to_json_bytes(&output.report)).expect("JSON is UTF-8"),
    };
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
