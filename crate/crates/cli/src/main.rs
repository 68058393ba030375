use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swlp_cli::{run, Command, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "swlp", version, about = "Simulate and verify stochastic well-posed linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the configured system and write trajectories and moments.
    Simulate(Args),
    /// Sweep the control and observation admissibility constants over the grid.
    Admissibility(Args),
    /// Run the selected verification suites.
    Verify(Args),
    /// Estimate well-posedness constants and their refinement stability.
    Wellposed(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `SWLP_THREADS` caps the worker pool.
fn threads() -> Result<Option<usize>, HarnessError> {
    match std::env::var("SWLP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| HarnessError::Config(format!("SWLP_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Admissibility(a) => (Command::Admissibility, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Wellposed(a) => (Command::Wellposed, a),
    };
    let result = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(o) = args.out {
            cfg.output_dir = o;
        }
        run(command, &cfg, threads()?)
    });
    match result {
        Ok(report) => {
            for r in &report.records {
                let sem = r.sem.map_or(String::from("n/a"), |s| format!("{s:.3e}"));
                println!(
                    "{:<6} {:<14} {:<34} value {:<12.6e} sem {sem}",
                    if r.pass { "pass" } else { "FAIL" },
                    r.suite,
                    r.name,
                    r.value
                );
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
