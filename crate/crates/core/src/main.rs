use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nag_flow::cli::{execute, load_config};

/// Run an experiment described by a config file and write CSV output plus a
/// verdict summary. Exit status is 0 iff every asserted check passes.
#[derive(Parser, Debug)]
#[command(name = "nag-flow", version, about)]
struct Args {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `experiment.output`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `experiment.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Print verdict lines and written files.
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match execute(&config, &out) {
        Ok(outcome) => {
            if args.verbose {
                for line in &outcome.lines {
                    eprintln!("{line}");
                }
                for f in &outcome.files {
                    eprintln!("wrote {}", f.display());
                }
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed; see {}", out.join("verdict.txt").display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
