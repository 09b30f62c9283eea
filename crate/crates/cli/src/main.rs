//! `rankae`: generate data, train rank-constrained autoencoders, evaluate
//! them and run the numerical verifiers.

mod eval;
mod run;
mod synth;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "rankae",
    version,
    about = "Rank-constrained autoencoder experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus a `.meta.json` sidecar).
    Synth {
        #[command(subcommand)]
        kind: synth::SynthKind,
    },
    /// Train an autoencoder into a fresh run directory.
    Train(Box<train::TrainArgs>),
    /// Evaluate a trained network.
    Eval {
        #[command(subcommand)]
        kind: eval::EvalKind,
    },
    /// Run numerical checks; exits non-zero if any fails.
    Verify {
        #[command(subcommand)]
        kind: verify::VerifyKind,
    },
}

/// Where a CSV result goes.
#[derive(Args, Clone, Debug)]
pub struct OutArg {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArg {
    pub fn writer(&self) -> rankae::Result<Box<dyn std::io::Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(std::fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Alternating algorithm.
    As,
    /// Contractive baseline.
    Caeh,
}

/// Outcome of a subcommand that ran to completion.
pub enum Status {
    Ok,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { kind } => synth::run(kind),
        Command::Train(args) => train::run(*args),
        Command::Eval { kind } => eval::run(kind),
        Command::Verify { kind } => verify::run(kind),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            match &e {
                rankae::Error::Config(errs) => {
                    eprintln!("error: invalid configuration");
                    for m in errs {
                        eprintln!("  - {m}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(2)
        }
    }
}
