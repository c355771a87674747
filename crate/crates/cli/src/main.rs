//! `edg-lab`: data generation, training, evaluation, sweeps, the
//! interpolation study, bound certification and report rendering.

mod commands;
mod config;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edg_core::divergence_lab::BoundConstant;
use edg_core::harness::{Algorithm, SelectionStrategy};
use edg_core::synthetic_data::DatasetKind;

#[derive(Debug, Parser)]
#[command(
    name = "edg-lab",
    version,
    about = "Evolving domain generalization workbench"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; its keys mirror the `--set` keys
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set trials=5` (repeatable, beats the config file)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory for every artifact [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs [default: 1]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Plain-text logs, warnings and errors only
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Dataset cache directory [default: $EDG_CACHE_DIR, else no cache]
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    DatasetKind::parse(s).map_err(|e| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).map_err(|e| e.to_string())
}

fn parse_selection(s: &str) -> Result<SelectionStrategy, String> {
    SelectionStrategy::parse(s).map_err(|e| e.to_string())
}

fn parse_constant(s: &str) -> Result<BoundConstant, String> {
    BoundConstant::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// evolcircle | rplate | rotated-cloud | rmnist
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetKind>,
    /// Number of domains, target included
    #[arg(long)]
    pub domains: Option<usize>,
    /// Samples per domain
    #[arg(long)]
    pub samples: Option<usize>,
    /// Rotation between consecutive domains in degrees (rotated-cloud, rmnist)
    #[arg(long)]
    pub distance: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    /// Comma-separated algorithms: dpnets, erm, erm-<k>, erm-scalar, erm-onehot, erm-outer, proto
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    pub algos: Option<Vec<Algorithm>>,
    /// Hyperparameter draws per cell [default: 20]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seeds per draw [default: 5]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// oracle | validation [default: oracle]
    #[arg(long, value_parser = parse_selection)]
    pub selection: Option<SelectionStrategy>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset and write it as JSON lines
    GenData {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train one model with fixed hyperparameters and save a checkpoint
    Train {
        /// Algorithm to train
        #[arg(long, value_parser = parse_algorithm, default_value = "dpnets")]
        algo: Algorithm,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a saved checkpoint on the target domain
    Eval {
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Random search per (axis value, algorithm) cell
    Sweep {
        /// distance | count
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. 3,5,7,10,15,20
        #[arg(long)]
        values: String,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Extrapolation (last target) against interpolation (middle target)
    InterpStudy {
        /// distance | count
        #[arg(long, default_value = "count")]
        axis: String,
        /// Comma-separated axis values
        #[arg(long, default_value = "5,7,9,11")]
        values: String,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Certify the divergence bounds on random discrete environments
    VerifyBounds {
        /// Instances for the lemma, theorem, corollary and change-of-measure suites [default: 1000]
        #[arg(long)]
        instances: Option<usize>,
        /// Instances for the divergence decomposition suite [default: 10000]
        #[arg(long)]
        decomposition_instances: Option<usize>,
        /// Constant that decides the exit code: corrected | published [default: corrected]
        #[arg(long, value_parser = parse_constant)]
        constant: Option<BoundConstant>,
    },
    /// Re-render a saved report, optionally under another selection strategy
    Report {
        /// Directory holding a report.json written by sweep or interp-study
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        /// oracle | validation [default: the saved strategy]
        #[arg(long, value_parser = parse_selection)]
        selection: Option<SelectionStrategy>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    logging::init(cli.global.quiet);
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!(target: "edg-lab", "{e}");
            ExitCode::from(match e {
                edg_core::Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
