use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqha::{noise_audit, parse_config, run_scenario, sweep_theta, RunError, RunSummary, SimConfig};

/// Environment variable naming the output directory when `--out` is absent.
const OUTPUT_ENV: &str = "SQHA_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "sqha-out";

#[derive(Parser)]
#[command(
    name = "sqha",
    version,
    about = "Stochastic quantum hydrodynamics simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write snapshot and diagnostic CSVs.
    Run(Target),
    /// Run the scenario at every theta in the [sweep] section.
    Sweep(Target),
    /// Parse and check a configuration without running it.
    Validate { config: PathBuf },
    /// Sample noise fields and write their empirical covariance.
    NoiseAudit(Target),
}

#[derive(clap::Args)]
struct Target {
    config: PathBuf,
    /// Output directory; overrides SQHA_OUTPUT_DIR.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Target {
    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }
}

fn load(path: &Path) -> Result<SimConfig, (i32, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| (1, format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| (1, format!("{}: {e}", path.display())))
}

fn report(result: Result<RunSummary, RunError>) -> Result<i32, (i32, String)> {
    let summary = result.map_err(|e| (e.exit_code(), e.to_string()))?;
    for file in &summary.files {
        println!("wrote {}", file.display());
    }
    for f in &summary.failures {
        eprintln!("error: {}: {}", f.label, f.message);
    }
    Ok(summary.exit_code())
}

fn dispatch(cli: Cli) -> Result<i32, (i32, String)> {
    match cli.command {
        Command::Run(t) => report(run_scenario(&load(&t.config)?, &t.out_dir())),
        Command::Sweep(t) => report(sweep_theta(&load(&t.config)?, &t.out_dir())),
        Command::NoiseAudit(t) => report(noise_audit(&load(&t.config)?, &t.out_dir())),
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} steps of {} over {} points, {} member(s)",
                cfg.steps,
                cfg.dt,
                cfg.grid.n_points(),
                cfg.ensemble
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err((code, message)) => {
            eprintln!("error: {message}");
            code
        }
    };
    ExitCode::from(code as u8)
}
