use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sgph_cli::{default_out_dir, parse_command, RunConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "sgph",
    about = "Stochastic Galerkin projection, port-Hamiltonian simulation and \
             structure-preserving model reduction for parametric second-order systems",
    version
)]
struct Cli {
    /// One of: assemble | simulate | mor | bode | h2sweep | validate-ph
    command: String,
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output entry)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble runs
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Override the polynomial-chaos total degree from the config
    #[arg(long)]
    d: Option<usize>,
    /// Suppress progress output
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(cmd) = parse_command(&cli.command) else {
        eprintln!(
            "unknown command \"{}\" (expected assemble | simulate | mor | bode | h2sweep | validate-ph)",
            cli.command
        );
        return ExitCode::from(sgph_cli::EXIT_CONFIG as u8);
    };
    let cfg = match RunConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let opts = RunOptions {
        out_dir: default_out_dir(&cfg, cli.out.as_deref()),
        threads: cli.threads.max(1),
        degree_override: cli.d,
        quiet: cli.quiet,
    };
    match sgph_cli::run_command(cmd, &cfg, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
