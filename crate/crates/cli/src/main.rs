//! `evolute`: generate demonstrations, train both streams, evaluate
//! policies, and serve live sessions.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evolute_core::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "evolute", version, about = "Two-stream imitation learning for a toy arena")]
pub struct Cli {
    /// key=value settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting (repeatable), e.g. `--sim n_obstacles=8`.
    #[arg(long = "sim", value_name = "KEY=VAL", global = true)]
    pub overrides: Vec<String>,
    /// Log more (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stream {
    Ff,
    Ebm,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Record scripted-expert demonstrations.
    GenData {
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write JSON lines instead of the binary format.
        #[arg(long)]
        text: bool,
    },
    /// Train the classifier stream, the energy stream, or both.
    Train {
        #[arg(long, value_enum, default_value_t = Stream::Both)]
        stream: Stream,
        /// Demonstration file (repeatable).
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a policy bundle and compute metrics.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 20)]
        matches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Demonstrations whose position density is the reference (repeatable).
        #[arg(long)]
        ref_data: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Serve live play sessions over TCP until interrupted.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        record_dir: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::class) {
        Some(ErrorClass::Usage) => 2,
        Some(ErrorClass::Numeric) => 4,
        Some(ErrorClass::Data) | None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
