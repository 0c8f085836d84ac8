use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dirac_rls::cli_io::{exit_code, parse_config, run_subcommand, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    KernelCheck,
    Solve,
    Amplitude,
    ScanExceptional,
    Dynamics,
    Compare,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::KernelCheck => Subcommand::KernelCheck,
            Command::Solve => Subcommand::Solve,
            Command::Amplitude => Subcommand::Amplitude,
            Command::ScanExceptional => Subcommand::ScanExceptional,
            Command::Dynamics => Subcommand::Dynamics,
            Command::Compare => Subcommand::Compare,
        }
    }
}

/// Stationary and time-dependent scattering for the Dirac operator.
///
/// All numerical settings live in the TOML config; flags only choose what to run.
#[derive(Debug, Parser)]
#[command(name = "dirac-rls", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(short = 'j', long)]
    threads: Option<usize>,
    /// Print stage summaries and the manifest location.
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let cmd = Subcommand::from(cli.command);
    let result = parse_config(&cli.config).and_then(|cfg| run_subcommand(cmd, &cfg));
    match result {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            if cli.verbose {
                for (stage, secs) in &summary.manifest.timings {
                    eprintln!("{stage}: {secs:.3} s");
                }
                eprintln!("{} outputs listed in manifest.json", summary.manifest.outputs.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
