//! Command-line front end: runs a named or file-based scenario and writes
//! CSV tables plus a manifest into the output directory.
//!
//! Usage:
//!   twinbeam --scenario fig2a --out runs/fig2a simulate
//!   twinbeam --scenario fano-sweep --out runs/fano sweep
//!   twinbeam --out runs/gain fit-gain pump_scan.csv
//!   twinbeam --scenario oracle-small --out runs/check oracle-check
//!
//! Exit status: 0 success, 2 configuration or input error, 3 I/O error,
//! 4 guard violation, 5 oracle-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twinbeam::report::{cmd_fit_gain, cmd_oracle_check, cmd_simulate, cmd_sweep, CommandError, EXIT_ORACLE_FAILED};
use twinbeam::scenario::{Scenario, ScenarioError, BUILTIN_NAMES};

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Conditioned multimode twin-beam simulator")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the number of pulses per point.
    #[arg(long, global = true)]
    pulses: Option<usize>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the base point and condition on every window.
    Simulate,
    /// Run every sweep point and fit Fano and NRF slopes.
    Sweep,
    /// Fit S = A sinh^2(sqrt(B P)) to a CSV with columns P,S.
    FitGain {
        data: PathBuf,
    },
    /// Compare the simulation with exact enumeration (small instances only).
    OracleCheck,
    /// List the built-in scenarios, or print one as TOML.
    Scenarios {
        name: Option<String>,
    },
}

fn load_scenario(cli: &Cli, default: &str) -> Result<Scenario, CommandError> {
    let mut s = match (&cli.config, &cli.scenario) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => Scenario::builtin(name)?,
        (None, None) => Scenario::builtin(default)?,
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(pulses) = cli.pulses {
        s.pulses = pulses;
    }
    s.check()?;
    Ok(s)
}

fn run(cli: &Cli) -> Result<i32, CommandError> {
    match &cli.command {
        Command::Simulate => {
            let s = load_scenario(cli, "fig2a")?;
            print!("{}", cmd_simulate(&s, &cli.out)?);
        }
        Command::Sweep => {
            let s = load_scenario(cli, "fig2a")?;
            print!("{}", cmd_sweep(&s, &cli.out)?);
        }
        Command::FitGain { data } => {
            print!("{}", cmd_fit_gain(data, &cli.out)?);
        }
        Command::OracleCheck => {
            let s = load_scenario(cli, "oracle-small")?;
            let report = cmd_oracle_check(&s, &cli.out)?;
            print!("{report}");
            if !report.passed() {
                return Ok(EXIT_ORACLE_FAILED);
            }
        }
        Command::Scenarios { name: None } => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
        }
        Command::Scenarios { name: Some(name) } => {
            print!("{}", Scenario::builtin(name)?.to_toml_string());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if let CommandError::Scenario(ScenarioError::Config(c)) = &e {
                for v in &c.violations {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
