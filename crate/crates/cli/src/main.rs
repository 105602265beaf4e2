//! `drt` — command-line front end for the tracking toolkit.
//!
//! Three subcommands: `track` runs the tracker over an image-directory
//! sequence, `eval` scores predictions against ground truth, and `synth`
//! renders a synthetic sequence from a spec file. Exit codes: 0 on
//! success, 2 for malformed input (bad files, specs, configs, flags), 3
//! for runtime failures. Diagnostics go to standard error.
//!
//! `DRT_THREADS` caps the worker-thread count; results are independent of
//! the parallelism degree.

mod commands;
mod config;
mod files;

use clap::{Parser, Subcommand, ValueEnum};
use drt_core::tracker::Ablation;
use std::path::PathBuf;
use std::process::ExitCode;

/// A failure plus the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input: unreadable or unparseable files, invalid specs.
    Input(String),
    /// The work itself failed after inputs were accepted.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "drt",
    version,
    about = "Correlation-filter tracking with patch-reliability weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a target through a directory of ordered image files.
    Track {
        /// Directory holding the sequence frames (png/jpg, sorted by name).
        #[arg(long)]
        seq: PathBuf,
        /// Ground-truth box file; the first line initializes the tracker.
        #[arg(long)]
        gt: PathBuf,
        /// Optional key=value config file overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for the predicted boxes, one "x,y,w,h" line per frame.
        #[arg(long)]
        out: PathBuf,
        /// Which learner variant to run.
        #[arg(long, value_enum, default_value_t = AblationArg::Full)]
        ablation: AblationArg,
    },
    /// Score a prediction file against ground truth.
    Eval {
        /// Predicted boxes, one "x,y,w,h" line per frame.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth boxes in the same format and line count.
        #[arg(long)]
        gt: PathBuf,
        /// Directory for the precision/success curve CSVs.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Render a synthetic sequence from a key=value spec file.
    Synth {
        /// Spec file describing frame size, motion, occlusion, and seed.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for numbered frames plus groundtruth.txt.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Learner variant selected on the command line.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AblationArg {
    /// Plain correlation filter, no consistency term, weights frozen at 1.
    Baseline,
    /// Consistency term on, weights still frozen at 1.
    Lrc,
    /// Full joint learning of the filter and the reliability weights.
    Full,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Baseline => Ablation::Baseline,
            AblationArg::Lrc => Ablation::Lrc,
            AblationArg::Full => Ablation::Full,
        }
    }
}

/// Applies the `DRT_THREADS` cap before any parallel work starts.
fn init_threads() -> Result<(), CliError> {
    let value = match std::env::var("DRT_THREADS") {
        Ok(v) => v,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(CliError::Input(format!("DRT_THREADS: {e}"))),
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Input(format!("DRT_THREADS = `{value}` is not a positive thread count"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = init_threads().and_then(|()| match cli.command {
        Command::Track {
            seq,
            gt,
            config,
            out,
            ablation,
        } => commands::track(&seq, &gt, config.as_deref(), &out, ablation.into()),
        Command::Eval { pred, gt, out_dir } => commands::eval(&pred, &gt, &out_dir),
        Command::Synth { spec, out } => commands::synth(&spec, &out),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
