//! `pnp`: command-line driver for the Slotboom Poisson-Nernst-Planck solver.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use log::{info, warn};

use config::{parse_config, ConfigError, Mode, Overrides, RunConfig, DEFAULT_MEAN};
use run::{Fault, PropertyFailure};

/// Environment variable overriding the output directory of the config file.
const OUTPUT_DIR_ENV: &str = "PNP_OUTPUT_DIR";

const AFTER_HELP: &str = "\
Modes:
  simulate    advance the configured problem, write simulate.csv and simulate_meta.txt
  mms         manufactured-solution convergence tables, one mms_<mean>.csv per mean
  properties  mass, positivity, energy and dissipation checks plus random trials
  verify      matrix-free operators against dense oracles on small grids

CSV columns:
  simulate.csv   step,t,mass_<species>...,min_<species>...,energy,dissipation,tau_star,poisson_residual,iterations
                 (dissipation and tau_star are empty on the step-0 row)
  mms_<mean>.csv mean,h,dt,err_c1,ord_c1,err_c2,ord_c2,err_psi,ord_psi
                 (order cells are empty on the first row, nan at rounding level)
Floats are written with 17 significant digits.

Output directory: --out, else $PNP_OUTPUT_DIR, else run.output, else ./output.

Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
3 solver non-convergence, 4 property violation.";

#[derive(Debug, Parser)]
#[command(name = "pnp", version, about = "Structure-preserving Poisson-Nernst-Planck solver", after_help = AFTER_HELP)]
struct Cli {
    /// TOML configuration file; built-in defaults are used without one.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Mobility mean: harmonic, geometric, arithmetic or entropic.
    #[arg(long)]
    mean: Option<String>,
    /// Cells per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Fixed time step, replacing the configured step rule.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Cells per axis for the dense oracle checks.
    #[arg(long)]
    verify_size: Option<usize>,
    /// Corrupt one concentration after the given step (properties mode).
    #[arg(long, hide = true, value_name = "STEP")]
    inject_fault: Option<usize>,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let output = cli.out.clone().or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from));
    let over = Overrides {
        mode: cli.mode,
        mean: cli.mean.clone(),
        n: cli.n,
        dt: cli.dt,
        output,
        seed: cli.seed,
        verify_size: cli.verify_size,
    };
    Ok(parse_config(&text, &over)?)
}

fn print_lines(lines: &[run::PropertyLine]) {
    for l in lines {
        println!("{l}");
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    if !cfg.mean_given && matches!(cfg.mode, Mode::Simulate | Mode::Properties) {
        warn!("no mobility mean configured; using the default `{DEFAULT_MEAN}`");
    }
    info!("mode {:?}, n = {}, output {}", cfg.mode, cfg.n, cfg.output.display());
    match cfg.mode {
        Mode::Simulate => {
            let s = run::run_simulate(&cfg)?;
            println!(
                "wrote {} ({} steps{})",
                s.csv.display(),
                s.steps,
                if s.stopped_early { ", energy plateau" } else { "" }
            );
        }
        Mode::Mms => {
            for p in run::run_mms(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Mode::Properties => {
            let fault = cli.inject_fault.map(|after_step| Fault { after_step });
            let lines = run::run_properties(&cfg, fault)?;
            print_lines(&lines);
            run::require_all(&lines)?;
        }
        Mode::Verify => {
            let lines = run::run_verify(&cfg).context("oracle verification")?;
            print_lines(&lines);
            run::require_all(&lines)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<PropertyFailure>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<pnp_core::Error>() {
            use pnp_core::Error as E;
            return match e {
                E::NonConvergence { .. } => 3,
                E::PositivityViolation { .. } => 4,
                E::InvalidGrid(_) | E::InvalidParameter(_) | E::IncompatibleRhs { .. } | E::OracleSize { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
