//! Command-line pipeline for symbolic density estimation.
//!
//! [`run_cli`] parses arguments, runs one subcommand and maps failures to
//! exit codes (2 configuration, 3 data, 4 numerical). Errors are printed to
//! stderr as a JSON record and also written to `error.json` in the output
//! directory when one is known.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, RawConfig};
use crate::error::StageError;

#[derive(Debug, Parser)]
#[command(
    name = "symden",
    version,
    about = "Symbolic density estimation pipeline"
)]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration shared by the pipeline stages.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Overrides a configuration key, e.g. `--set sr.niterations=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory; overrides `output_dir`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<PipelineConfig, StageError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        for s in &self.set {
            raw.set_override(s)?;
        }
        let mut c = PipelineConfig::from_raw(raw)?;
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draws samples from a builtin dataset into a CSV file.
    GenData {
        /// gaussian_mixture, gaussian4d, rastrigin, muon_decay or heavy_tailed.
        dataset: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Selects the bandwidth and writes the KDE on a grid.
    FitDensity(ConfigArgs),
    /// Estimates the support and writes the SR training labels.
    FindSupport {
        #[command(flatten)]
        config: ConfigArgs,
        /// `density.json` to read instead of the one in the output directory.
        #[arg(long)]
        density: Option<PathBuf>,
    },
    /// Runs symbolic regression on a training-label file.
    RunSr {
        #[command(flatten)]
        config: ConfigArgs,
        /// Training labels to read instead of `training.csv`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Scores the final model against the truth or the KDE.
    Validate(ConfigArgs),
    /// Merges the fronts of several run directories.
    Report {
        /// Run directories, one per loss regime.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every stage, with the configured decomposition.
    Run(ConfigArgs),
}

fn execute(cli: &Cli, threads: usize) -> Result<(), (StageError, Option<PathBuf>)> {
    let with_dir = |c: &PipelineConfig, r: Result<(), StageError>| {
        r.map_err(|e| (e, Some(c.output_dir.clone())))
    };
    let load = |a: &ConfigArgs| a.load().map_err(|e| (e, a.out.clone()));
    match &cli.command {
        Command::GenData {
            dataset,
            n,
            seed,
            out,
        } => commands::gen_data(dataset, *n, *seed, out).map_err(|e| (e, None)),
        Command::FitDensity(a) => {
            let c = load(a)?;
            with_dir(&c, commands::fit_density_stage(&c, threads))
        }
        Command::FindSupport { config, density } => {
            let c = load(config)?;
            with_dir(
                &c,
                commands::find_support_stage(&c, density.as_deref(), threads),
            )
        }
        Command::RunSr { config, labels } => {
            let c = load(config)?;
            with_dir(&c, commands::run_sr_stage(&c, labels.as_deref(), threads))
        }
        Command::Validate(a) => {
            let c = load(a)?;
            with_dir(&c, commands::validate_stage(&c, threads))
        }
        Command::Report { runs, out } => {
            commands::report_stage(runs, out).map_err(|e| (e, Some(out.clone())))
        }
        Command::Run(a) => {
            let c = load(a)?;
            with_dir(&c, commands::run_stage(&c, threads).map(|_| ()))
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!(
                "{}",
                StageError::config("cli", "--threads must be positive").to_json()
            );
            return 2;
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let threads = rayon::current_num_threads();
    match execute(&cli, threads) {
        Ok(()) => 0,
        Err((e, dir)) => {
            if let Some(dir) = dir {
                artifacts::write_error(&dir, &e);
            }
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
