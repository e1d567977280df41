//! The three interpretability experiments: time-steps-of-influence (TSOI)
//! extraction with day-of-year quantile aggregation, memory-cell vs
//! storage-state correlation, and single-cell attribution inspection.

use chrono::{Datelike, NaiveDate};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use thiserror::Error;

use crate::attribution::{integrated_gradients, AttributionError, AttributionMatrix, Baseline};
use crate::data::{DataError, InputWindow, NormStats, ProxyStateSeries};
use crate::grad::AttributionTarget;
use crate::lstm::{forward, ModelError, ModelParams};

/// Attribution-difference threshold that separates influence from noise.
pub const DEFAULT_TSOI_THRESHOLD: f64 = 2e-3;
/// Default Riemann step count for the attribution integral.
pub const DEFAULT_IG_STEPS: usize = 1000;
/// Correlations at or below this magnitude are hidden in masked reports.
pub const CORRELATION_MASK: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no usable windows for cell {cell} vs state `{state}`: every window had a constant side")]
    ConstantSeries { cell: usize, state: String },
    #[error("cell index {index} out of range for {hidden} hidden units")]
    CellIndexOutOfRange { index: usize, hidden: usize },
    #[error("no results to aggregate")]
    Empty,
}

// ---------------------------------------------------------------------------
// TSOI
// ---------------------------------------------------------------------------

/// TSOI of one output-target attribution matrix: sum the signed attributions
/// across the input variables per timestep, difference the sums step to step,
/// and count the days from the first difference above `threshold` to the end
/// of the sequence. No crossing means no measurable influence: 0.
pub fn tsoi(attr: &AttributionMatrix, threshold: f64) -> usize {
    assert_eq!(
        attr.target,
        AttributionTarget::Output,
        "TSOI is defined on output-target attributions"
    );
    let sums = attr.per_step_sums();
    let t_total = sums.len();
    for idx in 1..t_total {
        if (sums[idx] - sums[idx - 1]).abs() > threshold {
            return t_total - idx;
        }
    }
    0
}

/// TSOI of one test sample: prediction date, its day of year, and the count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsoiResult {
    pub date: NaiveDate,
    pub doy: u32,
    pub tsoi: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TsoiConfig {
    pub threshold: f64,
    /// Riemann steps for the underlying attribution integral.
    pub m: usize,
}

impl Default for TsoiConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_TSOI_THRESHOLD,
            m: DEFAULT_IG_STEPS,
        }
    }
}

/// One TSOI per window (integrated gradients against the zero baseline, then
/// [`tsoi`]). Windows are processed in parallel.
pub fn tsoi_series(
    params: &ModelParams,
    windows: &[InputWindow],
    config: &TsoiConfig,
) -> Result<Vec<TsoiResult>, AnalysisError> {
    windows
        .par_iter()
        .map(|w| {
            let baseline = Baseline::zeros(w.seq_len(), w.inputs.ncols());
            let attr = integrated_gradients(
                params,
                &w.inputs,
                &baseline,
                AttributionTarget::Output,
                config.m,
            )?;
            Ok(TsoiResult {
                date: w.prediction_date,
                doy: w.prediction_date.ordinal(),
                tsoi: tsoi(&attr, config.threshold),
            })
        })
        .collect()
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles of TSOI per day of year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoyQuantiles {
    pub doy: u32,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// One [`DoyQuantiles`] row per day of year present in the results, in DOY
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct DoyQuantileCurve {
    pub rows: Vec<DoyQuantiles>,
}

/// Groups TSOI results by day of year across test years and takes the 25 %,
/// 50 % and 75 % quantiles of each group.
pub fn doy_quantiles(results: &[TsoiResult]) -> Result<DoyQuantileCurve, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut groups: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
    for r in results {
        groups.entry(r.doy).or_default().push(r.tsoi as f64);
    }
    let rows = groups
        .into_iter()
        .map(|(doy, mut values)| {
            values.sort_by(|a, b| a.partial_cmp(b).expect("TSOI counts are finite"));
            DoyQuantiles {
                doy,
                q25: quantile_sorted(&values, 0.25),
                q50: quantile_sorted(&values, 0.50),
                q75: quantile_sorted(&values, 0.75),
            }
        })
        .collect();
    Ok(DoyQuantileCurve { rows })
}

/// Median of `values` grouped by the day of year of `dates`; a seasonal
/// reference curve for the TSOI figure.
pub fn doy_median(dates: &[NaiveDate], values: &[f64]) -> Vec<(u32, f64)> {
    assert_eq!(dates.len(), values.len());
    let mut groups: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
    for (d, v) in dates.iter().zip(values) {
        groups.entry(d.ordinal()).or_default().push(*v);
    }
    groups
        .into_iter()
        .map(|(doy, mut vs)| {
            vs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            (doy, quantile_sorted(&vs, 0.5))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cell-state correlations
// ---------------------------------------------------------------------------

/// Pearson correlation, or `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

/// Mean Pearson correlation of every memory cell against every storage state,
/// averaged over sample windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub state_names: Vec<String>,
    /// hidden × K mean correlations.
    pub mean_rho: Array2<f64>,
    /// Windows that contributed per pair.
    pub used_windows: Array2<usize>,
    /// Windows skipped per pair because one side was constant.
    pub skipped_windows: Array2<usize>,
}

impl CorrelationReport {
    /// Entries above the display threshold; weaker ones are `None`.
    pub fn masked(&self, threshold: f64) -> Array2<Option<f64>> {
        self.mean_rho.mapv(|rho| {
            if rho.abs() > threshold {
                Some(rho)
            } else {
                None
            }
        })
    }

    /// (cell, state index, mean ρ) of the strongest |ρ| entry.
    pub fn strongest(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, 0.0f64);
        for ((cell, state), &rho) in self.mean_rho.indexed_iter() {
            if rho.abs() > best.2.abs() {
                best = (cell, state, rho);
            }
        }
        best
    }
}

/// For every window: run the model, correlate each cell trajectory with each
/// aligned state window; average per pair over windows. Windows where either
/// side is constant are skipped and counted. The proxy series must cover
/// every window's days.
pub fn cell_state_correlations(
    params: &ModelParams,
    windows: &[InputWindow],
    proxy: &ProxyStateSeries,
) -> Result<CorrelationReport, AnalysisError> {
    if windows.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let hidden = params.hidden();
    let n_states = proxy.names().len();

    let per_window: Result<Vec<Array2<Option<f64>>>, AnalysisError> = windows
        .par_iter()
        .map(|w| {
            let trace = forward(&w.inputs, params)?;
            let state_block = proxy.window_ending(w.prediction_date, w.seq_len())?;
            let mut rho = Array2::from_elem((hidden, n_states), None);
            for cell in 0..hidden {
                let cell_track: Vec<f64> = trace.cell.column(cell).to_vec();
                for state in 0..n_states {
                    let state_track: Vec<f64> = state_block.column(state).to_vec();
                    rho[[cell, state]] = pearson(&cell_track, &state_track);
                }
            }
            Ok(rho)
        })
        .collect();
    let per_window = per_window?;

    let mut sum = Array2::<f64>::zeros((hidden, n_states));
    let mut used = Array2::<usize>::zeros((hidden, n_states));
    let mut skipped = Array2::<usize>::zeros((hidden, n_states));
    for rho in &per_window {
        for (idx, value) in rho.indexed_iter() {
            match value {
                Some(r) => {
                    sum[idx] += r;
                    used[idx] += 1;
                }
                None => skipped[idx] += 1,
            }
        }
    }
    for ((cell, state), &count) in used.indexed_iter() {
        if count == 0 {
            return Err(AnalysisError::ConstantSeries {
                cell,
                state: proxy.names()[state].clone(),
            });
        }
    }
    let mean_rho = Array2::from_shape_fn((hidden, n_states), |idx| sum[idx] / used[idx] as f64);

    Ok(CorrelationReport {
        state_names: proxy.names().to_vec(),
        mean_rho,
        used_windows: used,
        skipped_windows: skipped,
    })
}

// ---------------------------------------------------------------------------
// Single-cell inspection
// ---------------------------------------------------------------------------

/// The three aligned panels of a cell inspection: what drives the cell, how
/// the cell evolves, and the temperature context.
#[derive(Debug, Clone)]
pub struct CellInspection {
    /// Cell-target integrated gradients, seq_len × 5.
    pub attribution: AttributionMatrix,
    /// The cell's value over the window.
    pub cell_trajectory: Array1<f64>,
    /// Physical (tmin, tmax) per day, seq_len × 2.
    pub temperatures: Array2<f64>,
}

/// Bundles the cell-target attribution, the cell trajectory, and the
/// denormalized tmin/tmax series for one window.
pub fn inspect_cell(
    params: &ModelParams,
    window: &InputWindow,
    cell: usize,
    stats: &NormStats,
    m: usize,
) -> Result<CellInspection, AnalysisError> {
    if cell >= params.hidden() {
        return Err(AnalysisError::CellIndexOutOfRange {
            index: cell,
            hidden: params.hidden(),
        });
    }
    let baseline = Baseline::zeros(window.seq_len(), window.inputs.ncols());
    let attribution = integrated_gradients(
        params,
        &window.inputs,
        &baseline,
        AttributionTarget::Cell(cell),
        m,
    )?;
    let trace = forward(&window.inputs, params)?;
    let cell_trajectory = trace.cell_trajectory(cell);

    let mut temperatures = Array2::zeros((window.seq_len(), 2));
    for t in 0..window.seq_len() {
        temperatures[[t, 0]] = stats.denormalize_value(2, window.inputs[[t, 2]]);
        temperatures[[t, 1]] = stats.denormalize_value(3, window.inputs[[t, 3]]);
    }

    Ok(CellInspection {
        attribution,
        cell_trajectory,
        temperatures,
    })
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// `date,doy,tsoi` rows.
pub fn tsoi_to_csv(results: &[TsoiResult]) -> String {
    let mut out = String::from("date,doy,tsoi\n");
    for r in results {
        out.push_str(&format!("{},{},{}\n", r.date, r.doy, r.tsoi));
    }
    out
}

/// `doy,q25,q50,q75` rows.
pub fn quantiles_to_csv(curve: &DoyQuantileCurve) -> String {
    let mut out = String::from("doy,q25,q50,q75\n");
    for r in &curve.rows {
        out.push_str(&format!("{},{},{},{}\n", r.doy, r.q25, r.q50, r.q75));
    }
    out
}

/// `cell,<state names>` rows of mean correlations. With `masked`, entries at
/// or below the display threshold are left empty.
pub fn correlations_to_csv(report: &CorrelationReport, masked: bool) -> String {
    let mut out = String::from("cell");
    for name in &report.state_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for cell in 0..report.mean_rho.nrows() {
        out.push_str(&cell.to_string());
        for state in 0..report.mean_rho.ncols() {
            let rho = report.mean_rho[[cell, state]];
            if masked && rho.abs() <= CORRELATION_MASK {
                out.push(',');
            } else {
                out.push_str(&format!(",{rho}"));
            }
        }
        out.push('\n');
    }
    out
}
