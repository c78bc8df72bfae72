//! `bnnsim` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bnnsim::{Activation, Error};

#[derive(Debug, Parser)]
#[command(name = "bnnsim", version, about = "Binary-weighted memristive crossbar network simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment configuration (JSON). Missing fields take preset defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Built-in defaults to start from when no config file is given.
    #[arg(long, global = true, value_parser = ["mnist", "iris"])]
    pub preset: Option<String>,

    /// Seed for training, data splits and device programming.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file for the command's artifact ("-" for stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Suppress the summary line.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Print the fully resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Digital,
    Analog,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the float network and write the model file.
    Train,
    /// Quantize a trained model to four weight levels.
    Binarize {
        /// Trained model file.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate a binarized model on the test split.
    Eval {
        /// Binarized model file.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "digital")]
        mode: EvalMode,
    },
    /// Sweep one device non-ideality and record analog accuracy per trial.
    Sweep {
        /// Binarized model file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// p_switch_fail or sigma_r.
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Estimate power, area and readout latency.
    Cost {
        /// Use this activation circuit for every layer.
        #[arg(long)]
        activation: Option<Activation>,
        /// Estimate the two 4x10 sigmoid crossbar reference design instead of the configured network.
        #[arg(long)]
        reference: bool,
    },
    /// Export activation transfer curves as CSV.
    Curves {
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Export the step response to this input current (amperes) instead of the DC sweep.
        #[arg(long)]
        step_current: Option<f64>,
        /// End time of the step response, seconds (defaults to 10 tau).
        #[arg(long)]
        t_end: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("bnnsim: {} error: {e}", category_name(&e));
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}

fn category_name(e: &Error) -> &'static str {
    match e.category() {
        bnnsim::Category::Usage => "usage",
        bnnsim::Category::Data => "data",
        bnnsim::Category::Constraint => "constraint",
        bnnsim::Category::Numeric => "numeric",
    }
}
