use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nehari4_runner::{execute, parse_config, CliError};

/// Solve, verify and report on the fourth-order critical problem on the torus.
#[derive(Parser, Debug)]
#[command(name = "nehari4", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("nehari4: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &Args) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = parse_config(&text)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = execute(&cfg, &out)?;
    match &outcome.report.error {
        Some(e) => eprintln!("nehari4: {} ({})", e, outcome.report.status),
        None => eprintln!("nehari4: {} complete, report in {}", cfg.subcommand.name(), outcome.dir.display()),
    }
    Ok(outcome.exit_code)
}
