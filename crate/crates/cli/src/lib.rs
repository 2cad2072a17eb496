//! Batch front end for expectation-value optimal control: configuration
//! loading and validation, the `optimize`/`sweep`/`predict`/`validate`/
//! `export-plot` commands, and result documents.
//!
//! Exit codes: 0 success, 1 error, 2 ran to completion without converging
//! (any sweep node failing or stopping early counts).

pub mod commands;
pub mod config;
pub mod results;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome, PlotKind, PredictArgs};

#[derive(Debug, Parser)]
#[command(name = "evoctl", version, about = "Optimal control of quantum expectation values with level-set continuation")]
pub struct Cli {
    /// Worker threads for parallel multistart (default: all cores).
    #[arg(long, global = true, env = "EVOCTL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multistart optimization at the nominal scale and unscaled values.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize every node of the configured grid and store the sheet.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Interpolate the optimal control at a new (s, c) from a sweep result.
    Predict {
        /// Result document written by `sweep`.
        #[arg(long, alias = "result")]
        sheet: PathBuf,
        /// Config to evaluate against instead of the one echoed in the sheet.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scale values, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        s: Vec<f64>,
        /// Unscaled values, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        c: Vec<f64>,
        /// Branch to follow (default: first branch covering the query).
        #[arg(long)]
        branch: Option<usize>,
        /// Allow queries outside the sampled region.
        #[arg(long)]
        extrapolate: bool,
        /// Polish the prediction with up to N descent iterations (N defaults to 5).
        #[arg(long, num_args = 0..=1, default_missing_value = "5", value_name = "N")]
        refine: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write CSV columns for plotting from a result document.
    ExportPlot {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Optimize { config, out, seed } => commands::cmd_optimize(&config, &out, seed),
        Command::Sweep { config, out, seed } => commands::cmd_sweep(&config, &out, seed),
        Command::Predict {
            sheet,
            config,
            s,
            c,
            branch,
            extrapolate,
            refine,
            out,
            seed,
        } => commands::cmd_predict(&PredictArgs {
            sheet,
            config,
            s,
            c,
            branch,
            extrapolate,
            refine,
            out,
            seed,
        }),
        Command::Validate { config } => commands::cmd_validate(&config),
        Command::ExportPlot { result, kind, out } => commands::cmd_export_plot(&result, kind, &out),
    }
}
