use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use variolab::config::Command;
use variolab::{execute, Invocation, EXIT_CHECK_FAILED, EXIT_PASS};

#[derive(Parser)]
#[command(name = "variolab", version, about = "Reproducible experiments on entangled bilinear averages")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the invariant suite and report pass/fail per check.
    Verify(RunArgs),
    /// Estimate the variation constant over a random ensemble.
    Estimate(RunArgs),
    /// Measure the growth of truncated triangular Hilbert transforms.
    Growth(RunArgs),
    /// Measure the discrete-to-continuous transference gap.
    Transfer(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides VARIOLAB_OUT and [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Estimate(a) => (Command::Estimate, a),
        Sub::Growth(a) => (Command::Growth, a),
        Sub::Transfer(a) => (Command::Transfer, a),
    };
    let inv = Invocation { command, config: args.config, out: args.out, threads: args.threads };
    match execute(&inv) {
        Ok(done) => {
            print!("{}", variolab::report::text_summary(&done.report));
            println!("wrote {} files to {}", done.written.len(), done.out_dir.display());
            if done.report.all_passed() {
                ExitCode::from(EXIT_PASS as u8)
            } else {
                eprintln!("variolab: one or more checks failed");
                ExitCode::from(EXIT_CHECK_FAILED as u8)
            }
        }
        Err(e) => {
            eprintln!("variolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
