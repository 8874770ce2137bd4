//! The `forgetnet` command line: train, grid-search, evaluate, diagnose,
//! project and prepare datasets. Every command writes its outputs and a
//! `manifest.json` under `--out`.

pub mod baselines;
pub mod commands;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "forgetnet", version, about = "Adversarial forgetting for invariant representations")]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config dataset.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and evaluate it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Train every grid point from the config's `grid.*` keys and rank them.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate a checkpoint against the dataset's test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Information bounds for a synthetic channel or a trained model.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        channel_spec: Option<PathBuf>,
        /// Noise added to z̃ when tracing a model.
        #[arg(long, default_value_t = 0.1)]
        sigma_eps: f64,
        /// Test rows used when tracing a model.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value = "binned")]
        estimator: String,
    },
    /// Two-dimensional PCA of z and z̃ on the test split.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Load or generate a dataset and write its cache.
    Data {
        #[command(flatten)]
        common: Common,
    },
}

/// Exit code for an error: 2 when training diverged, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let diverged = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<forgetnet_core::Error>(),
            Some(forgetnet_core::Error::Diverged { .. })
        )
    });
    if diverged {
        EXIT_DIVERGED
    } else {
        EXIT_USER
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(&cli, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
