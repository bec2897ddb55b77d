//! The `dmil` command line: dataset generation, training, evaluation and the
//! property check.
//!
//! Every command validates its flags and inputs before it writes anything,
//! so a usage error never leaves a partial output behind. Exit codes are 0
//! on success, 2 for usage errors and 3 for runtime failures (including
//! training divergence and failing properties).

pub mod check;
pub mod eval;
pub mod gen_data;
pub mod manifest;
pub mod train;

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dmil", version, about = "Discriminator-guided model-based offline imitation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect an expert or mediocre dataset from a simulated task.
    GenData(gen_data::GenDataArgs),
    /// Train a policy on one or two dataset files.
    Train(train::TrainArgs),
    /// Score a checkpoint (or a reference controller) in the simulator.
    Eval(eval::EvalArgs),
    /// Run the registered correctness properties.
    Check(check::CheckArgs),
}

/// A failure, tagged with the exit code class it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e:#}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

pub(crate) fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(anyhow::anyhow!("{msg}"))
}

pub(crate) trait Classify<T> {
    fn usage_err(self) -> Result<T, CliError>;
    fn runtime_err(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.into()))
    }

    fn runtime_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data::run(&a, out),
        Command::Train(a) => train::run(&a, out),
        Command::Eval(a) => eval::run(&a, out),
        Command::Check(a) => check::run(&a, out),
    }
}

/// Parses `args` (including the program name), runs the command with
/// stdout as its output and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
