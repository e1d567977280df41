//! `hydrolstm` — train a small LSTM rainfall-runoff model and run the
//! interpretability analyses on it: evaluation hydrographs, time-steps-of-
//! influence, memory-cell/storage-state correlations, and single-cell
//! attribution inspection. Also generates the synthetic toy catchment the
//! test suite verifies everything against.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 training
//! divergence.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_cells, cmd_evaluate, cmd_inspect_cell, cmd_synth, cmd_train, cmd_tsoi, CellsOptions,
    EvaluateOptions, InspectCellOptions, SynthOptions, TrainOptions, TsoiOptions,
};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "hydrolstm",
    about = "LSTM rainfall-runoff modelling with integrated-gradients interpretability",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic toy-catchment dataset (forcings, discharge, true states)
    Synth(SynthArgs),
    /// Train the LSTM on forcing/discharge CSVs and write a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test period: NSE, per-day CSV, hydrograph SVG
    Evaluate(EvaluateArgs),
    /// Time steps of influence per test sample, with day-of-year quantiles
    Tsoi(TsoiArgs),
    /// Correlate memory cells with storage-state series over the test period
    Cells(CellsArgs),
    /// Inspect one memory cell: attribution, trajectory, temperature context
    InspectCell(InspectCellArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Toy-catchment TOML config; defaults are a snow-dominated catchment
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated day count
    #[arg(long)]
    n_days: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    forcings: PathBuf,
    #[arg(long)]
    discharge: PathBuf,
    /// Training TOML config mirroring the TrainConfig fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Input window length in days
    #[arg(long, default_value_t = 365)]
    seq_len: usize,
    /// Calendar years of data used for training
    #[arg(long, default_value_t = 15)]
    train_years: u32,
    /// Fraction of the post-training remainder used for validation
    #[arg(long, default_value_t = 0.25)]
    val_fraction: f64,
    /// Also write a checkpoint after every epoch
    #[arg(long)]
    emit_epoch_checkpoints: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    forcings: PathBuf,
    #[arg(long)]
    discharge: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TsoiArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    forcings: PathBuf,
    #[arg(long)]
    discharge: PathBuf,
    /// Attribution-difference threshold separating influence from noise
    #[arg(long, default_value_t = 2e-3)]
    threshold: f64,
    /// Riemann steps for the attribution integral
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CellsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    forcings: PathBuf,
    /// Storage-state CSV: date,<name_1>,...,<name_K>
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectCellArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    forcings: PathBuf,
    /// Memory cell index
    #[arg(long)]
    cell: usize,
    /// Prediction date whose input window is inspected (must lie in the test period)
    #[arg(long)]
    date: NaiveDate,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&SynthOptions {
            config: a.config,
            seed: a.seed,
            n_days: a.n_days,
            out: a.out,
        }),
        Command::Train(a) => cmd_train(&TrainOptions {
            forcings: a.forcings,
            discharge: a.discharge,
            config: a.config,
            out: a.out,
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch_size,
            seed: a.seed,
            hidden: a.hidden,
            gradient_clip_norm: a.clip,
            seq_len: a.seq_len,
            train_years: a.train_years,
            val_fraction: a.val_fraction,
            emit_epoch_checkpoints: a.emit_epoch_checkpoints,
        }),
        Command::Evaluate(a) => cmd_evaluate(&EvaluateOptions {
            checkpoint: a.checkpoint,
            forcings: a.forcings,
            discharge: a.discharge,
            out: a.out,
        }),
        Command::Tsoi(a) => cmd_tsoi(&TsoiOptions {
            checkpoint: a.checkpoint,
            forcings: a.forcings,
            discharge: a.discharge,
            threshold: a.threshold,
            m: a.m,
            out: a.out,
        }),
        Command::Cells(a) => cmd_cells(&CellsOptions {
            checkpoint: a.checkpoint,
            forcings: a.forcings,
            states: a.states,
            out: a.out,
        }),
        Command::InspectCell(a) => cmd_inspect_cell(&InspectCellOptions {
            checkpoint: a.checkpoint,
            forcings: a.forcings,
            cell: a.cell,
            date: a.date,
            m: a.m,
            out: a.out,
        }),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
