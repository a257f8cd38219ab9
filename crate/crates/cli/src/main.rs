use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sparsevar_cli::config::{parse_config_with, Command, Overrides};
use sparsevar_cli::error::CliError;
use sparsevar_cli::run::run;

/// Sparse VAR estimation, simulation and benchmarking.
#[derive(Parser, Debug)]
#[command(name = "sparsevar", version)]
struct Args {
    /// simulate, estimate, benchmark or verify (overrides `command` in the config)
    command: Option<String>,
    /// Configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let command = match &args.command {
        Some(c) => Some(Command::parse(c).ok_or_else(|| {
            CliError::Config(format!("unknown command `{c}`; expected simulate, estimate, benchmark or verify"))
        })?),
        None => None,
    };
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None if command == Some(Command::Verify) => String::new(),
        None => return Err(CliError::Config("--config is required".into())),
    };
    let overrides = Overrides {
        command,
        seed: args.seed,
        threads: args.threads,
        out: args.out,
    };
    let cfg = parse_config_with(&text, &overrides)?;
    for path in run(&cfg, &text)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
