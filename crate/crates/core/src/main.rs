use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entcont::scenario::selftest::selftest;
use entcont::scenario::{check_scenario, initial_spectrum, parse_config, run_scenario, RunOptions, ScenarioConfig};
use entcont::{Error, Result};

/// Purity density and entanglement continuity simulator.
#[derive(Parser)]
#[command(name = "entcont", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write its time series, report and dumps.
    Run {
        config: PathBuf,
        /// Repeat the run at dt/2 and require the final purity to agree.
        #[arg(long)]
        dt_refine: bool,
        /// Cross-check the first steps against the dense reference integrator (n <= 16).
        #[arg(long)]
        dense_oracle: bool,
    },
    /// Purity and continuity reports of the initial state, without evolving.
    Check { config: PathBuf },
    /// Print the Schmidt spectrum of the initial state.
    Spectrum { config: PathBuf },
    /// Run the invariant suite on the built-in presets.
    Selftest,
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn execute(cli: Cli, out: &mut String) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, dt_refine, dense_oracle } => {
            let cfg = load(&config)?;
            let summary = run_scenario(&cfg, RunOptions { dt_refine, dense_oracle })?;
            let last = summary.rows.last();
            writeln!(
                out,
                "t = {:.6}  purity = {:.12}  concurrence = {:.3e}  residual(0) = {:.2e}  residual(T) = {:.2e}",
                summary.final_time,
                summary.final_purity.pi_from_rho,
                summary.final_purity.concurrence,
                summary.initial_residual.relative_max(),
                summary.final_residual.relative_max(),
            )
            .unwrap();
            if let Some(row) = last {
                writeln!(out, "last recorded row: t = {:.6} purity = {:.12}", row.t, row.purity).unwrap();
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config } => {
            let summary = check_scenario(&load(&config)?)?;
            writeln!(out, "{}", to_json(&summary)).unwrap();
            if summary.resolved {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: initial state is not resolved by the grid");
                Ok(ExitCode::from(3))
            }
        }
        Command::Spectrum { config } => {
            let lambda = initial_spectrum(&load(&config)?)?;
            let purity: f64 = lambda.iter().map(|l| l * l).sum();
            writeln!(out, "# k lambda_k").unwrap();
            for (k, l) in lambda.iter().enumerate() {
                writeln!(out, "{k} {l:.16e}").unwrap();
            }
            writeln!(out, "# purity {purity:.16e}").unwrap();
            writeln!(out, "# schmidt_number {:.16e}", 1.0 / purity).unwrap();
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let lines = selftest()?;
            let mut failed = 0;
            for l in &lines {
                writeln!(out, "{} {}  {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail).unwrap();
                failed += usize::from(!l.passed);
            }
            writeln!(out, "{} checks, {failed} failed", lines.len()).unwrap();
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let mut out = String::new();
    let result = execute(Cli::parse(), &mut out);
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    match std::io::stdout().lock().write_all(out.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            eprintln!("error: writing to stdout: {e}");
            return ExitCode::from(4);
        }
        _ => {}
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
