use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oransim_cli::{policy_lint, run_scenario, sweep, CliError};

#[derive(Parser)]
#[command(name = "oransim", about = "Deterministic Open RAN control-plane simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (and all its variants) and write CSVs plus report.md.
    Run {
        /// Scenario JSON file.
        file: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: ./out/<scenario name stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path config overrides, e.g. --set cells.0.scs_khz=240.
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Run one parameter over several values, many seeds each.
    Sweep {
        /// Scenario JSON file.
        file: PathBuf,
        /// Dotted-path parameter key, e.g. cells.0.scs_khz.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Seeds per value.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Output directory (default: ./out/sweep).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate A1 policy documents.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Lint one policy JSON file; diagnostics go to standard error.
    Lint { file: PathBuf },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

fn default_out(file: &PathBuf, suffix: &str) -> PathBuf {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    PathBuf::from("out").join(format!("{stem}{suffix}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run { file, seed, out, set } => {
            let out = out.unwrap_or_else(|| default_out(&file, ""));
            run_scenario(&file, seed, &out, &set)
        }
        Command::Sweep {
            file,
            param,
            values,
            seeds,
            out,
        } => {
            let out = out.unwrap_or_else(|| default_out(&file, "_sweep"));
            sweep(&file, &param, &values, seeds, &out).map(|_| ())
        }
        Command::Policy {
            command: PolicyCommand::Lint { file },
        } => policy_lint(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
