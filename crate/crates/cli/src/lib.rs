//! Command-line front end for the coordlab toolkit.
//!
//! Every command reads a JSON instance file and prints (or writes) a JSON
//! report. Exit codes: 0 success, 1 usage, parse or computation error,
//! 2 infeasible target, 3 enumeration budget exceeded.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use coordlab::CoordError;

pub mod commands;
pub mod instance;
pub mod report;

pub use instance::InstanceFile;
pub use report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("malformed instance at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Core(#[from] CoordError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoordError::BudgetExceeded { .. }) => EXIT_BUDGET,
            CliError::Core(CoordError::InfeasibleTarget { .. }) => EXIT_INFEASIBLE,
            _ => EXIT_ERROR,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coordlab", version, about = "Implicit-communication coordination toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Instance file (JSON).
    pub instance: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the instance seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether the target lies in a delay cell's coordination set.
    Feasible {
        #[command(flatten)]
        common: Common,
        /// Delay pair `d1,d2`, each `noncausal`, `never` or an integer. Defaults to the file's delays.
        #[arg(long)]
        cell: Option<String>,
        /// Largest auxiliary alphabet tried for cells that need one.
        #[arg(long, default_value_t = 4)]
        max_u: usize,
    },
    /// Maximize the expected reward over a coordination set.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ConstraintArg::Theorem2)]
        constraint: ConstraintArg,
        #[arg(long, default_value_t = 200)]
        restarts: usize,
        #[arg(long, default_value_t = 300)]
        iterations: usize,
        /// Skip the grid-search floor.
        #[arg(long)]
        no_grid: bool,
        /// Also report the argmax mixed toward uniform until the slack reaches this value.
        #[arg(long)]
        back_off: Option<f64>,
        /// Write a copy of the instance whose target is the (backed-off) argmax.
        #[arg(long)]
        emit_instance: Option<PathBuf>,
    },
    /// Run a coding scheme on sampled sources.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SchemeArg::BlockMarkov)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Include the x, a, b sequences of every trial.
        #[arg(long)]
        trace: bool,
    },
    /// Exhaustive search over deterministic encoders for a short horizon.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = RegimeArg::CausalBob)]
        regime: RegimeArg,
        #[arg(long, default_value_t = coordlab::optimizer::DEFAULT_ORACLE_BUDGET)]
        budget: u128,
        /// Also check the coordination bound over every encoder pair.
        #[arg(long)]
        certify: bool,
    },
    /// Play the repeated game with a built-in strategy pair.
    Game {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = StrategyArg::Scheme)]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value_t = BobInfoArg::Actions)]
        bob_info: BobInfoArg,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Slack the optimal target is backed off to when the file has no target.
        #[arg(long, default_value_t = 0.1)]
        back_off: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    Theorem1,
    Theorem2,
    /// The cell given by the instance's delays.
    Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Noncausal,
    BlockMarkov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    NoncausalBoth,
    CausalBob,
    CausalBobFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Scheme,
    CopyConstant,
    CopyEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BobInfoArg {
    Actions,
    ActionsAndSource,
}

/// What a finished invocation produced.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    /// Text for stdout.
    pub stdout: String,
    /// Text for stderr.
    pub stderr: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let (stdout, stderr) = if code == EXIT_OK { (text, String::new()) } else { (String::new(), text) };
            return Outcome { code, stdout, stderr };
        }
    };
    match commands::execute(&cli.command) {
        Ok(done) => done,
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}
