//! Command-line front end: dataset simulation, radar frame export and
//! detection, solver training and evaluation, and plot data.
//!
//! Every command writes a `manifest.json` into its output directory before
//! its results; `replay` re-runs a manifest and checks the outputs match
//! byte for byte.

pub mod commands;
pub mod config;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

use isac_ident::dataset::Mode;

/// Exit code for usage and configuration problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<isac_ident::Error> for CliError {
    fn from(e: isac_ident::Error) -> Self {
        match e {
            isac_ident::Error::Config(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "isac-ident", version, about = "Radar-aided communication user identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML scenario/training config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "fast", value_parser = parse_mode)]
        mode: Mode,
    },
    /// Write the radar cube and ground truth of every frame.
    Frames {
        #[command(flatten)]
        common: Common,
        /// Only the first N frames.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run object detection over a directory of radar cubes.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cubes: PathBuf,
    },
    /// Fit solvers on the training split, evaluate on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Solver name or `all`.
        #[arg(long, default_value = "all")]
        solver: String,
    },
    /// Evaluate solvers fitted by `train` on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Output directory of a `train` run.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "all")]
        solver: String,
    },
    /// Scatter of beam angle against target radar angle with fitted curves.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Re-run a recorded command into a new directory and compare outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: isac_ident::Error| e.to_string())
}

/// Caps rayon's pool at `ISAC_IDENT_THREADS` when set.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ISAC_IDENT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("ISAC_IDENT_THREADS must be a positive integer, got '{v}'")))?;
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let rest: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match configure_threads().and_then(|_| commands::dispatch(cli.command, &rest)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
