//! Implementations of the pipeline subcommands.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::json;

use hydrolstm::analysis::{
    cell_state_correlations, correlations_to_csv, doy_median, doy_quantiles, inspect_cell,
    quantiles_to_csv, tsoi_series, tsoi_to_csv, TsoiConfig, CORRELATION_MASK,
};
use hydrolstm::attribution::attribution_to_csv;
use hydrolstm::checkpoint::{self, Checkpoint};
use hydrolstm::data::{
    build_split_samples, make_windows, parse_discharge, parse_forcings, parse_proxy_states,
    DataError, DateRange, ForcingSeries, InputWindow, SplitSpec,
};
use hydrolstm::plot;
use hydrolstm::synthetic::{generate, ToyCatchmentConfig};
use hydrolstm::train::{evaluate, report_to_csv, train, EpochHook, TrainConfig};

use crate::error::{io_error, CliError};
use crate::manifest::ManifestBuilder;

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Loads data, derives the checkpoint's split, and windows the test period.
fn test_windows(
    ckpt: &Checkpoint,
    forcings: &ForcingSeries,
) -> Result<(Vec<InputWindow>, DateRange), CliError> {
    let (_, _, test_range) = hydrolstm::data::split_periods(forcings.range(), &ckpt.split)?;
    let test_forcings = forcings.slice_range(test_range)?;
    let windows = make_windows(&test_forcings, &ckpt.stats, ckpt.seq_len)?;
    Ok((windows, test_range))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub struct SynthOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_days: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_synth(opts: &SynthOptions) -> Result<(), CliError> {
    let mut config = match &opts.config {
        Some(path) => toml::from_str::<ToyCatchmentConfig>(&read_to_string(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        None => ToyCatchmentConfig::default(),
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(n_days) = opts.n_days {
        config.n_days = n_days;
    }

    let mut manifest = ManifestBuilder::new(
        "synth",
        serde_json::to_value(&config).expect("config serializes"),
    );
    manifest.seed(config.seed);
    if let Some(path) = &opts.config {
        manifest.input(path)?;
    }

    let trace = generate(&config)?;
    ensure_out_dir(&opts.out)?;

    let forcings_path = opts.out.join("forcings.csv");
    let discharge_path = opts.out.join("discharge.csv");
    let states_path = opts.out.join("states.csv");
    hydrolstm::data::write_forcings_csv(&trace.forcings, &forcings_path)?;
    hydrolstm::data::write_discharge_csv(&trace.discharge, &discharge_path)?;
    hydrolstm::data::write_proxy_states_csv(&trace.proxy_states(), &states_path)?;
    manifest.register_output(&forcings_path);
    manifest.register_output(&discharge_path);
    manifest.register_output(&states_path);

    let balance = trace.water_balance();
    println!(
        "generated {} days at seed {}: water balance in {:.3} mm, out {:.3} mm, relative error {:.2e}",
        config.n_days, config.seed, balance.total_in, balance.total_out, balance.relative_error
    );

    manifest.finish(&opts.out)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainOptions {
    pub forcings: PathBuf,
    pub discharge: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub hidden: Option<usize>,
    pub gradient_clip_norm: Option<f64>,
    pub seq_len: usize,
    pub train_years: u32,
    pub val_fraction: f64,
    pub emit_epoch_checkpoints: bool,
}

pub fn cmd_train(opts: &TrainOptions) -> Result<(), CliError> {
    let mut config = match &opts.config {
        Some(path) => toml::from_str::<TrainConfig>(&read_to_string(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = opts.epochs {
        config.epochs = v;
    }
    if let Some(v) = opts.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = opts.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = opts.seed {
        config.seed = v;
    }
    if let Some(v) = opts.hidden {
        config.hidden = v;
    }
    if let Some(v) = opts.gradient_clip_norm {
        config.gradient_clip_norm = v;
    }
    let split = SplitSpec {
        train_years: opts.train_years,
        val_fraction: opts.val_fraction,
    };

    let mut manifest = ManifestBuilder::new(
        "train",
        json!({
            "train": serde_json::to_value(&config).expect("config serializes"),
            "split": serde_json::to_value(split).expect("split serializes"),
            "seq_len": opts.seq_len,
        }),
    );
    manifest.seed(config.seed);
    manifest.input(&opts.forcings)?;
    manifest.input(&opts.discharge)?;
    if let Some(path) = &opts.config {
        manifest.input(path)?;
    }

    let forcings = parse_forcings(&opts.forcings)?;
    let discharge = parse_discharge(&opts.discharge)?;
    let (stats, samples, ranges) = build_split_samples(&forcings, &discharge, &split, opts.seq_len)?;
    println!(
        "split: train {} ({} samples), val {} ({}), test {} ({})",
        ranges.0,
        samples.train.len(),
        ranges.1,
        samples.val.len(),
        ranges.2,
        samples.test.len()
    );

    ensure_out_dir(&opts.out)?;
    let mut epoch_paths: Vec<PathBuf> = Vec::new();
    let report = {
        let stats_for_hook = stats.clone();
        let mut hook_fn = |epoch: usize, params: &hydrolstm::lstm::ModelParams| {
            if !opts.emit_epoch_checkpoints {
                return;
            }
            let path = opts.out.join(format!("epoch_{epoch:03}.ckpt"));
            let ckpt = Checkpoint {
                params: params.clone(),
                stats: stats_for_hook.clone(),
                seq_len: opts.seq_len,
                split,
            };
            if checkpoint::save(&ckpt, &path).is_ok() {
                epoch_paths.push(path);
            }
        };
        let hook: Option<&mut EpochHook<'_>> = if opts.emit_epoch_checkpoints {
            Some(&mut hook_fn)
        } else {
            None
        };
        train(&samples.train, &samples.val, &stats, &config, hook)?
    };

    let best = report.epochs[report.selected_epoch];
    println!(
        "selected epoch {} of {}: train loss {:.6}, validation NSE {:.4}",
        report.selected_epoch,
        report.epochs.len(),
        best.train_loss,
        best.val_nse
    );

    let ckpt = Checkpoint {
        params: report.params.clone(),
        stats,
        seq_len: opts.seq_len,
        split,
    };
    let ckpt_path = opts.out.join("model.ckpt");
    checkpoint::save(&ckpt, &ckpt_path)?;
    manifest.register_output(&ckpt_path);
    for path in &epoch_paths {
        manifest.register_output(path);
    }

    let report_path = opts.out.join("training_report.csv");
    manifest.write_output(&report_path, &report_to_csv(&report))?;
    let curve_path = opts.out.join("training_curve.svg");
    manifest.write_output(&curve_path, &plot::training_curve_svg(&report))?;

    manifest.finish(&opts.out)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub struct EvaluateOptions {
    pub checkpoint: PathBuf,
    pub forcings: PathBuf,
    pub discharge: PathBuf,
    pub out: PathBuf,
}

pub fn cmd_evaluate(opts: &EvaluateOptions) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "evaluate",
        json!({
            "checkpoint": opts.checkpoint.display().to_string(),
        }),
    );
    manifest.input(&opts.checkpoint)?;
    manifest.input(&opts.forcings)?;
    manifest.input(&opts.discharge)?;

    let ckpt = checkpoint::load(&opts.checkpoint)?;
    checkpoint::check_shape(&ckpt, 5, "the 5-variable forcing schema")?;
    let forcings = parse_forcings(&opts.forcings)?;
    let discharge = parse_discharge(&opts.discharge)?;
    if forcings.range() != discharge.range() {
        return Err(DataError::DateMismatch {
            left: format!("forcings {}", forcings.range()),
            right: format!("discharge {}", discharge.range()),
        }
        .into());
    }

    let (_, _, test_range) = hydrolstm::data::split_periods(forcings.range(), &ckpt.split)?;
    let test_forcings = forcings.slice_range(test_range)?;
    let test_discharge = discharge.slice_range(test_range)?;
    let samples = hydrolstm::data::make_samples(
        &test_forcings,
        &test_discharge,
        &ckpt.stats,
        ckpt.seq_len,
    )?;
    let (nse, rows) = evaluate(&ckpt.params, &samples, &ckpt.stats)?;
    println!("test NSE over {} ({} samples): {nse:.4}", test_range, rows.len());

    // physical precip and tmin on each prediction day, for the csv and figure
    let by_date: std::collections::HashMap<NaiveDate, (f64, f64)> = test_forcings
        .records()
        .iter()
        .map(|r| (r.date, (r.precip, r.tmin)))
        .collect();
    let precip: Vec<f64> = rows.iter().map(|r| by_date[&r.date].0).collect();
    let tmin: Vec<f64> = rows.iter().map(|r| by_date[&r.date].1).collect();

    ensure_out_dir(&opts.out)?;
    let mut csv = String::from("date,observed,simulated,precip\n");
    for (row, p) in rows.iter().zip(&precip) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.date, row.observed, row.simulated, p
        ));
    }
    manifest.write_output(&opts.out.join("evaluation.csv"), &csv)?;
    manifest.write_output(&opts.out.join("nse.txt"), &format!("{nse}\n"))?;
    manifest.write_output(
        &opts.out.join("hydrograph.svg"),
        &plot::hydrograph_svg(&rows, &precip, &tmin),
    )?;

    manifest.finish(&opts.out)
}

// ---------------------------------------------------------------------------
// tsoi
// ---------------------------------------------------------------------------

pub struct TsoiOptions {
    pub checkpoint: PathBuf,
    pub forcings: PathBuf,
    pub discharge: PathBuf,
    pub threshold: f64,
    pub m: usize,
    pub out: PathBuf,
}

pub fn cmd_tsoi(opts: &TsoiOptions) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "tsoi",
        json!({
            "checkpoint": opts.checkpoint.display().to_string(),
            "threshold": opts.threshold,
            "m": opts.m,
        }),
    );
    manifest.input(&opts.checkpoint)?;
    manifest.input(&opts.forcings)?;
    manifest.input(&opts.discharge)?;

    let ckpt = checkpoint::load(&opts.checkpoint)?;
    checkpoint::check_shape(&ckpt, 5, "the 5-variable forcing schema")?;
    let forcings = parse_forcings(&opts.forcings)?;
    let discharge = parse_discharge(&opts.discharge)?;
    let (windows, test_range) = test_windows(&ckpt, &forcings)?;

    let config = TsoiConfig {
        threshold: opts.threshold,
        m: opts.m,
    };
    let results = tsoi_series(&ckpt.params, &windows, &config)?;
    let curve = doy_quantiles(&results)?;

    let mut sorted: Vec<usize> = results.iter().map(|r| r.tsoi).collect();
    sorted.sort_unstable();
    println!(
        "TSOI over {} samples in {}: median {} days",
        results.len(),
        test_range,
        sorted[sorted.len() / 2]
    );

    // seasonal reference medians from the test period
    let test_forcings = forcings.slice_range(test_range)?;
    let test_discharge = discharge.slice_range(test_range)?;
    let dates: Vec<NaiveDate> = test_forcings.records().iter().map(|r| r.date).collect();
    let precip: Vec<f64> = test_forcings.records().iter().map(|r| r.precip).collect();
    let tmin: Vec<f64> = test_forcings.records().iter().map(|r| r.tmin).collect();
    let q: Vec<f64> = test_discharge.values();

    ensure_out_dir(&opts.out)?;
    manifest.write_output(&opts.out.join("tsoi.csv"), &tsoi_to_csv(&results))?;
    manifest.write_output(&opts.out.join("tsoi_quantiles.csv"), &quantiles_to_csv(&curve))?;
    manifest.write_output(
        &opts.out.join("tsoi.svg"),
        &plot::tsoi_quantile_svg(
            &curve,
            &doy_median(&dates, &precip),
            &doy_median(&dates, &q),
            &doy_median(&dates, &tmin),
        ),
    )?;

    manifest.finish(&opts.out)
}

// ---------------------------------------------------------------------------
// cells
// ---------------------------------------------------------------------------

pub struct CellsOptions {
    pub checkpoint: PathBuf,
    pub forcings: PathBuf,
    pub states: PathBuf,
    pub out: PathBuf,
}

pub fn cmd_cells(opts: &CellsOptions) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "cells",
        json!({
            "checkpoint": opts.checkpoint.display().to_string(),
        }),
    );
    manifest.input(&opts.checkpoint)?;
    manifest.input(&opts.forcings)?;
    manifest.input(&opts.states)?;

    let ckpt = checkpoint::load(&opts.checkpoint)?;
    checkpoint::check_shape(&ckpt, 5, "the 5-variable forcing schema")?;
    let forcings = parse_forcings(&opts.forcings)?;
    let proxy = parse_proxy_states(&opts.states)?;
    let (windows, test_range) = test_windows(&ckpt, &forcings)?;

    let report = cell_state_correlations(&ckpt.params, &windows, &proxy)?;
    let (cell, state, rho) = report.strongest();
    println!(
        "correlations over {} samples in {}: strongest is cell {cell} vs `{}` at mean rho {rho:.3}",
        windows.len(),
        test_range,
        report.state_names[state]
    );

    ensure_out_dir(&opts.out)?;
    manifest.write_output(
        &opts.out.join("correlations.csv"),
        &correlations_to_csv(&report, false),
    )?;
    manifest.write_output(
        &opts.out.join("correlations_masked.csv"),
        &correlations_to_csv(&report, true),
    )?;
    manifest.write_output(
        &opts.out.join("correlations.svg"),
        &plot::correlation_grid_svg(&report, CORRELATION_MASK),
    )?;

    manifest.finish(&opts.out)
}

// ---------------------------------------------------------------------------
// inspect-cell
// ---------------------------------------------------------------------------

pub struct InspectCellOptions {
    pub checkpoint: PathBuf,
    pub forcings: PathBuf,
    pub cell: usize,
    pub date: NaiveDate,
    pub m: usize,
    pub out: PathBuf,
}

pub fn cmd_inspect_cell(opts: &InspectCellOptions) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "inspect-cell",
        json!({
            "checkpoint": opts.checkpoint.display().to_string(),
            "cell": opts.cell,
            "date": opts.date.to_string(),
            "m": opts.m,
        }),
    );
    manifest.input(&opts.checkpoint)?;
    manifest.input(&opts.forcings)?;

    let ckpt = checkpoint::load(&opts.checkpoint)?;
    checkpoint::check_shape(&ckpt, 5, "the 5-variable forcing schema")?;
    if opts.cell >= ckpt.params.hidden() {
        return Err(CliError::Validation(format!(
            "cell {} out of range: the model has {} hidden units",
            opts.cell,
            ckpt.params.hidden()
        )));
    }
    let forcings = parse_forcings(&opts.forcings)?;
    let (_, _, test_range) = hydrolstm::data::split_periods(forcings.range(), &ckpt.split)?;
    if !test_range.contains(opts.date) {
        return Err(CliError::Validation(format!(
            "date {} lies outside the test period {}",
            opts.date, test_range
        )));
    }

    let window_range = DateRange::new(
        opts.date - chrono::Days::new(ckpt.seq_len as u64 - 1),
        opts.date,
    )?;
    let window_forcings = forcings.slice_range(window_range)?;
    let windows = make_windows(&window_forcings, &ckpt.stats, ckpt.seq_len)?;
    let window = &windows[0];

    let inspection = inspect_cell(&ckpt.params, window, opts.cell, &ckpt.stats, opts.m)?;
    println!(
        "cell {} over {}: completeness residual {:.3e}",
        opts.cell, window_range, inspection.attribution.completeness_residual
    );

    ensure_out_dir(&opts.out)?;
    manifest.write_output(
        &opts.out.join("attribution.csv"),
        &attribution_to_csv(&inspection.attribution, window),
    )?;

    let mut cell_csv = String::from("t,date,value\n");
    for (t, v) in inspection.cell_trajectory.iter().enumerate() {
        cell_csv.push_str(&format!("{},{},{v}\n", t + 1, window.date_of_row(t)));
    }
    manifest.write_output(&opts.out.join("cell.csv"), &cell_csv)?;

    let mut temp_csv = String::from("t,date,tmin,tmax\n");
    for t in 0..window.seq_len() {
        temp_csv.push_str(&format!(
            "{},{},{},{}\n",
            t + 1,
            window.date_of_row(t),
            inspection.temperatures[[t, 0]],
            inspection.temperatures[[t, 1]]
        ));
    }
    manifest.write_output(&opts.out.join("temperature.csv"), &temp_csv)?;
    manifest.write_output(
        &opts.out.join("inspect_cell.svg"),
        &plot::cell_inspection_svg(&inspection, window),
    )?;

    manifest.finish(&opts.out)
}

