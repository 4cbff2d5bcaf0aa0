//! The `repro` command line: configuration, run-directory lifecycle and the
//! four commands `fingerprint`, `reproduce`, `score` and `report`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use repro_core::Mode;

pub use commands::{execute, Outcome};
pub use config::{Backends, RunConfig};
pub use error::{CliError, EXIT_INPUT, EXIT_OK, EXIT_REPLAY_MISS, EXIT_STAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "repro",
    version,
    about = "Extract a paper's criterion fingerprint, generate and refine its code, score the result"
)]
pub struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; overrides `run_dir` from the config
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Model access mode; overrides `mode` from the config
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Skip every stage the manifest records as complete
    #[arg(long, global = true)]
    pub resume: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Extract the criterion fingerprint from the paper
    Fingerprint,
    /// Generate the initial workspace and run the verify/plan/refine loop
    Reproduce {
        /// Run the fingerprint stage first instead of requiring it
        #[arg(long)]
        from_scratch: bool,
    },
    /// Score against a weighted rubric tree
    Score {
        /// Rubric JSON; overrides `rubric_path` from the config
        #[arg(long)]
        rubric: Option<PathBuf>,
        /// Grade the rubric leaves against the final workspace
        #[arg(long)]
        grade: bool,
        /// Match the fingerprint against the rubric leaves
        #[arg(long = "match")]
        match_fingerprint: bool,
    },
    /// Render report.md for a run directory
    Report,
}

/// Execute and map the result to a process exit code, printing diagnostics.
pub fn run(cli: &Cli, backends: &Backends) -> i32 {
    match execute(cli, backends) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
