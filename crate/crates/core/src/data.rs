//! Parsing, validation, normalization, windowing, and chronological splitting
//! of the daily forcing / discharge / storage-state series.
//!
//! All ingestion goes through one CSV schema family (ISO-8601 dates, fixed
//! lowercase headers):
//!
//! - forcings:   `date,precip,srad,tmin,tmax,vp` (mm/d, W/m², °C, °C, Pa)
//! - discharge:  `date,discharge` (mm/d, basin-area-normalized)
//! - states:     `date,<name_1>,...,<name_K>` (mm), K ≥ 1
//!
//! Missing values are a hard error; series must be daily-contiguous.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Days, Months, NaiveDate};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input variable order used by every matrix in the crate.
pub const FORCING_VARIABLES: [&str; 5] = ["precip", "srad", "tmin", "tmax", "vp"];
/// Forcing variables plus the target, the order of [`NormStats`] entries.
pub const ALL_VARIABLES: [&str; 6] = ["precip", "srad", "tmin", "tmax", "vp", "discharge"];
/// Index of the discharge entry in [`ALL_VARIABLES`].
pub const DISCHARGE_VAR: usize = 5;

pub const FORCING_HEADER: &str = "date,precip,srad,tmin,tmax,vp";
pub const DISCHARGE_HEADER: &str = "date,discharge";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: missing column `{column}` (expected header `{expected}`)")]
    MissingColumn {
        path: String,
        column: String,
        expected: String,
    },
    #[error("{path}: unexpected header `{found}` (expected `{expected}`)")]
    UnexpectedHeader {
        path: String,
        found: String,
        expected: String,
    },
    #[error("{path}: no data rows")]
    EmptyFile { path: String },
    #[error("{path}:{line}: cannot parse `{value}` in column `{column}`")]
    InvalidField {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}:{line}: non-finite value in column `{column}`")]
    NonFiniteValue {
        path: String,
        line: u64,
        column: String,
    },
    #[error("{path}:{line}: negative `{column}` is not physical")]
    NegativeValue {
        path: String,
        line: u64,
        column: String,
    },
    #[error("{path}:{line}: tmin {tmin} exceeds tmax {tmax}")]
    TminAboveTmax {
        path: String,
        line: u64,
        tmin: f64,
        tmax: f64,
    },
    #[error("{path}:{line}: date {found} does not follow {prev} by one day")]
    NonContiguousDates {
        path: String,
        line: u64,
        prev: NaiveDate,
        found: NaiveDate,
    },
    #[error("variable `{variable}` is constant over the training range")]
    ZeroVariance { variable: String },
    #[error("no records in range {start}..={end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("range {start}..={end} is outside the series span")]
    RangeOutsideSeries { start: NaiveDate, end: NaiveDate },
    #[error("invalid range: start {start} is after end {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("series of {got} days is too short for {needed}-day windows")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("series are not date-aligned: {left} vs {right}")]
    DateMismatch { left: String, right: String },
    #[error("span of {got_days} days cannot be split: {reason}")]
    SpanTooShort { got_days: i64, reason: String },
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
}

/// One day of meteorological forcings.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingRecord {
    pub date: NaiveDate,
    /// Precipitation, mm/day.
    pub precip: f64,
    /// Solar radiation, W/m².
    pub srad: f64,
    /// Daily minimum temperature, °C.
    pub tmin: f64,
    /// Daily maximum temperature, °C.
    pub tmax: f64,
    /// Vapor pressure, Pa.
    pub vp: f64,
}

impl ForcingRecord {
    fn values(&self) -> [f64; 5] {
        [self.precip, self.srad, self.tmin, self.tmax, self.vp]
    }
}

/// One day of observed discharge, mm/day normalized by basin area.
#[derive(Debug, Clone, PartialEq)]
pub struct DischargeRecord {
    pub date: NaiveDate,
    pub discharge: f64,
}

/// A validated, daily-contiguous forcing series.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSeries {
    records: Vec<ForcingRecord>,
}

/// A validated, daily-contiguous discharge series.
#[derive(Debug, Clone, PartialEq)]
pub struct DischargeSeries {
    records: Vec<DischargeRecord>,
}

/// Daily series of named storage states (e.g. SWE, UZS, LZS), mm.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyStateSeries {
    start: NaiveDate,
    names: Vec<String>,
    /// days × states
    values: Array2<f64>,
}

/// An inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DataError> {
        if start > end {
            return Err(DataError::InvalidRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> i64 {
        self.end.signed_duration_since(self.start).num_days() + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

fn check_finite(value: f64, origin: &str, line: u64, column: &str) -> Result<(), DataError> {
    if !value.is_finite() {
        return Err(DataError::NonFiniteValue {
            path: origin.to_string(),
            line,
            column: column.to_string(),
        });
    }
    Ok(())
}

fn check_nonnegative(value: f64, origin: &str, line: u64, column: &str) -> Result<(), DataError> {
    if value < 0.0 {
        return Err(DataError::NegativeValue {
            path: origin.to_string(),
            line,
            column: column.to_string(),
        });
    }
    Ok(())
}

fn check_contiguous(
    prev: NaiveDate,
    found: NaiveDate,
    origin: &str,
    line: u64,
) -> Result<(), DataError> {
    if prev.checked_add_days(Days::new(1)) != Some(found) {
        return Err(DataError::NonContiguousDates {
            path: origin.to_string(),
            line,
            prev,
            found,
        });
    }
    Ok(())
}

impl ForcingSeries {
    /// Validates record invariants (values finite, precip/srad/vp ≥ 0,
    /// tmin ≤ tmax, dates daily-contiguous) and wraps the records.
    ///
    /// `origin` names the data source in error messages; in-memory series use
    /// a label, parsed files use the path. Line numbers are as-if-CSV
    /// (record k is line k + 2).
    pub fn new(records: Vec<ForcingRecord>, origin: &str) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyFile {
                path: origin.to_string(),
            });
        }
        for (k, r) in records.iter().enumerate() {
            let line = k as u64 + 2;
            for (value, column) in r.values().iter().zip(FORCING_VARIABLES) {
                check_finite(*value, origin, line, column)?;
            }
            check_nonnegative(r.precip, origin, line, "precip")?;
            check_nonnegative(r.srad, origin, line, "srad")?;
            check_nonnegative(r.vp, origin, line, "vp")?;
            if r.tmin > r.tmax {
                return Err(DataError::TminAboveTmax {
                    path: origin.to_string(),
                    line,
                    tmin: r.tmin,
                    tmax: r.tmax,
                });
            }
            if k > 0 {
                check_contiguous(records[k - 1].date, r.date, origin, line)?;
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ForcingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.records[0].date,
            end: self.records[self.records.len() - 1].date,
        }
    }

    /// Physical values as an N × 5 matrix in [`FORCING_VARIABLES`] order.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.records.len(), 5));
        for (k, r) in self.records.iter().enumerate() {
            let vals = r.values();
            for (i, v) in vals.iter().enumerate() {
                m[[k, i]] = *v;
            }
        }
        m
    }

    /// The sub-series covering `range`, which must lie inside the span.
    pub fn slice_range(&self, range: DateRange) -> Result<ForcingSeries, DataError> {
        let span = self.range();
        if range.start < span.start || range.end > span.end {
            return Err(DataError::RangeOutsideSeries {
                start: range.start,
                end: range.end,
            });
        }
        let offset = range.start.signed_duration_since(span.start).num_days() as usize;
        let len = range.days() as usize;
        Ok(ForcingSeries {
            records: self.records[offset..offset + len].to_vec(),
        })
    }
}

impl DischargeSeries {
    pub fn new(records: Vec<DischargeRecord>, origin: &str) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyFile {
                path: origin.to_string(),
            });
        }
        for (k, r) in records.iter().enumerate() {
            let line = k as u64 + 2;
            check_finite(r.discharge, origin, line, "discharge")?;
            check_nonnegative(r.discharge, origin, line, "discharge")?;
            if k > 0 {
                check_contiguous(records[k - 1].date, r.date, origin, line)?;
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[DischargeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.records[0].date,
            end: self.records[self.records.len() - 1].date,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.discharge).collect()
    }

    pub fn slice_range(&self, range: DateRange) -> Result<DischargeSeries, DataError> {
        let span = self.range();
        if range.start < span.start || range.end > span.end {
            return Err(DataError::RangeOutsideSeries {
                start: range.start,
                end: range.end,
            });
        }
        let offset = range.start.signed_duration_since(span.start).num_days() as usize;
        let len = range.days() as usize;
        Ok(DischargeSeries {
            records: self.records[offset..offset + len].to_vec(),
        })
    }
}

impl ProxyStateSeries {
    pub fn new(
        start: NaiveDate,
        names: Vec<String>,
        values: Array2<f64>,
        origin: &str,
    ) -> Result<Self, DataError> {
        if names.is_empty() || values.nrows() == 0 {
            return Err(DataError::EmptyFile {
                path: origin.to_string(),
            });
        }
        assert_eq!(names.len(), values.ncols(), "state names vs columns");
        for (k, row) in values.outer_iter().enumerate() {
            let line = k as u64 + 2;
            for (v, name) in row.iter().zip(&names) {
                check_finite(*v, origin, line, name)?;
                check_nonnegative(*v, origin, line, name)?;
            }
        }
        Ok(Self {
            start,
            names,
            values,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.start + Days::new(self.values.nrows() as u64 - 1),
        }
    }

    /// The `len`-day block of all states ending at `end` (inclusive).
    pub fn window_ending(&self, end: NaiveDate, len: usize) -> Result<Array2<f64>, DataError> {
        let start = end - Days::new(len as u64 - 1);
        let span = self.range();
        if start < span.start || end > span.end {
            return Err(DataError::RangeOutsideSeries { start, end });
        }
        let offset = start.signed_duration_since(span.start).num_days() as usize;
        Ok(self.values.slice(s![offset..offset + len, ..]).to_owned())
    }
}

// ---------------------------------------------------------------------------
// CSV parsing and writing
// ---------------------------------------------------------------------------

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    path: &Path,
) -> Result<(), DataError> {
    let origin = path.display().to_string();
    let headers = reader.headers().map_err(|source| DataError::Csv {
        path: origin.clone(),
        source,
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        for col in expected {
            if !found.contains(col) {
                return Err(DataError::MissingColumn {
                    path: origin,
                    column: col.to_string(),
                    expected: expected.join(","),
                });
            }
        }
        return Err(DataError::UnexpectedHeader {
            path: origin,
            found: found.join(","),
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn parse_date(field: &str, origin: &str, line: u64) -> Result<NaiveDate, DataError> {
    field.parse().map_err(|_| DataError::InvalidField {
        path: origin.to_string(),
        line,
        column: "date".to_string(),
        value: field.to_string(),
    })
}

fn parse_value(field: &str, column: &str, origin: &str, line: u64) -> Result<f64, DataError> {
    field.parse().map_err(|_| DataError::InvalidField {
        path: origin.to_string(),
        line,
        column: column.to_string(),
        value: field.to_string(),
    })
}

fn record_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Parses a forcing CSV (`date,precip,srad,tmin,tmax,vp`), validating all
/// record invariants. Errors name the offending file line.
pub fn parse_forcings(path: &Path) -> Result<ForcingSeries, DataError> {
    let origin = path.display().to_string();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["date", "precip", "srad", "tmin", "tmax", "vp"], path)?;

    let mut records = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|source| DataError::Csv {
            path: origin.clone(),
            source,
        })?;
        let line = record_line(&row, k as u64 + 2);
        if row.len() != 6 {
            return Err(DataError::UnexpectedHeader {
                path: origin.clone(),
                found: format!("{} fields on line {line}", row.len()),
                expected: FORCING_HEADER.to_string(),
            });
        }
        let date = parse_date(&row[0], &origin, line)?;
        let mut vals = [0.0f64; 5];
        for (i, column) in FORCING_VARIABLES.iter().enumerate() {
            vals[i] = parse_value(&row[i + 1], column, &origin, line)?;
            check_finite(vals[i], &origin, line, column)?;
        }
        check_nonnegative(vals[0], &origin, line, "precip")?;
        check_nonnegative(vals[1], &origin, line, "srad")?;
        check_nonnegative(vals[4], &origin, line, "vp")?;
        if vals[2] > vals[3] {
            return Err(DataError::TminAboveTmax {
                path: origin.clone(),
                line,
                tmin: vals[2],
                tmax: vals[3],
            });
        }
        if let Some(prev) = records.last() {
            let prev: &ForcingRecord = prev;
            check_contiguous(prev.date, date, &origin, line)?;
        }
        records.push(ForcingRecord {
            date,
            precip: vals[0],
            srad: vals[1],
            tmin: vals[2],
            tmax: vals[3],
            vp: vals[4],
        });
    }
    if records.is_empty() {
        return Err(DataError::EmptyFile { path: origin });
    }
    Ok(ForcingSeries { records })
}

/// Parses a discharge CSV (`date,discharge`).
pub fn parse_discharge(path: &Path) -> Result<DischargeSeries, DataError> {
    let origin = path.display().to_string();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["date", "discharge"], path)?;

    let mut records = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|source| DataError::Csv {
            path: origin.clone(),
            source,
        })?;
        let line = record_line(&row, k as u64 + 2);
        if row.len() != 2 {
            return Err(DataError::UnexpectedHeader {
                path: origin.clone(),
                found: format!("{} fields on line {line}", row.len()),
                expected: DISCHARGE_HEADER.to_string(),
            });
        }
        let date = parse_date(&row[0], &origin, line)?;
        let discharge = parse_value(&row[1], "discharge", &origin, line)?;
        check_finite(discharge, &origin, line, "discharge")?;
        check_nonnegative(discharge, &origin, line, "discharge")?;
        if let Some(prev) = records.last() {
            let prev: &DischargeRecord = prev;
            check_contiguous(prev.date, date, &origin, line)?;
        }
        records.push(DischargeRecord { date, discharge });
    }
    if records.is_empty() {
        return Err(DataError::EmptyFile { path: origin });
    }
    Ok(DischargeSeries { records })
}

/// Parses a storage-state CSV (`date,<name_1>,...,<name_K>`), K ≥ 1.
pub fn parse_proxy_states(path: &Path) -> Result<ProxyStateSeries, DataError> {
    let origin = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|source| DataError::Csv {
        path: origin.clone(),
        source,
    })?;
    let cols: Vec<String> = headers.iter().map(str::to_string).collect();
    if cols.first().map(String::as_str) != Some("date") || cols.len() < 2 {
        return Err(DataError::MissingColumn {
            path: origin,
            column: "date".to_string(),
            expected: "date,<state_1>,...,<state_K>".to_string(),
        });
    }
    let names: Vec<String> = cols[1..].to_vec();

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|source| DataError::Csv {
            path: origin.clone(),
            source,
        })?;
        let line = record_line(&row, k as u64 + 2);
        if row.len() != names.len() + 1 {
            return Err(DataError::UnexpectedHeader {
                path: origin.clone(),
                found: format!("{} fields on line {line}", row.len()),
                expected: format!("date plus {} state columns", names.len()),
            });
        }
        let date = parse_date(&row[0], &origin, line)?;
        if let Some(&prev) = dates.last() {
            check_contiguous(prev, date, &origin, line)?;
        }
        for (i, name) in names.iter().enumerate() {
            let v = parse_value(&row[i + 1], name, &origin, line)?;
            check_finite(v, &origin, line, name)?;
            check_nonnegative(v, &origin, line, name)?;
            rows.push(v);
        }
        dates.push(date);
    }
    if dates.is_empty() {
        return Err(DataError::EmptyFile { path: origin });
    }
    let values = Array2::from_shape_vec((dates.len(), names.len()), rows)
        .expect("row count × column count matches collected values");
    ProxyStateSeries::new(dates[0], names, values, &origin)
}

fn write_file(path: &Path, contents: &str) -> Result<(), DataError> {
    std::fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a forcing series in the exact schema `parse_forcings` reads.
/// Floats use shortest round-trip formatting, so parse ∘ write = identity.
pub fn write_forcings_csv(series: &ForcingSeries, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("date,precip,srad,tmin,tmax,vp\n");
    for r in series.records() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.date, r.precip, r.srad, r.tmin, r.tmax, r.vp
        )
        .expect("string write");
    }
    write_file(path, &out)
}

pub fn write_discharge_csv(series: &DischargeSeries, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("date,discharge\n");
    for r in series.records() {
        writeln!(out, "{},{}", r.date, r.discharge).expect("string write");
    }
    write_file(path, &out)
}

pub fn write_proxy_states_csv(states: &ProxyStateSeries, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("date");
    for name in states.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let mut date = states.start;
    for row in states.values.outer_iter() {
        write!(out, "{date}").expect("string write");
        for v in row {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
        date = date + Days::new(1);
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-variable mean and population standard deviation over the training
/// period, for the 5 forcings plus discharge (see [`ALL_VARIABLES`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    mean: [f64; 6],
    std: [f64; 6],
}

impl NormStats {
    /// Builds stats from raw moments; fails on any non-positive std.
    pub fn new(mean: [f64; 6], std: [f64; 6]) -> Result<Self, DataError> {
        for (i, &s) in std.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() || !mean[i].is_finite() {
                return Err(DataError::ZeroVariance {
                    variable: ALL_VARIABLES[i].to_string(),
                });
            }
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self, var: usize) -> f64 {
        self.mean[var]
    }

    pub fn std(&self, var: usize) -> f64 {
        self.std[var]
    }

    pub fn normalize_value(&self, var: usize, x: f64) -> f64 {
        (x - self.mean[var]) / self.std[var]
    }

    pub fn denormalize_value(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }

    pub fn normalize_discharge(&self, q: f64) -> f64 {
        self.normalize_value(DISCHARGE_VAR, q)
    }

    pub fn denormalize_discharge(&self, z: f64) -> f64 {
        self.denormalize_value(DISCHARGE_VAR, z)
    }

    /// Normalizes a physical N × 5 forcing matrix column by column.
    pub fn normalize_forcings(&self, physical: &Array2<f64>) -> Array2<f64> {
        let mut out = physical.clone();
        for (i, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|x| (x - self.mean[i]) / self.std[i]);
        }
        out
    }

    /// Exact inverse of [`NormStats::normalize_forcings`].
    pub fn denormalize_forcings(&self, normalized: &Array2<f64>) -> Array2<f64> {
        let mut out = normalized.clone();
        for (i, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|z| z * self.std[i] + self.mean[i]);
        }
        out
    }
}

fn population_stats(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Per-variable mean/std over `train_range` only (population formula,
/// divisor N). Later validation/test values never enter the statistics.
pub fn compute_norm_stats(
    forcings: &ForcingSeries,
    discharge: &DischargeSeries,
    train_range: DateRange,
) -> Result<NormStats, DataError> {
    let train_forcings = forcings.slice_range(train_range)?;
    let train_discharge = discharge.slice_range(train_range)?;
    if train_forcings.is_empty() || train_discharge.is_empty() {
        return Err(DataError::EmptyRange {
            start: train_range.start,
            end: train_range.end,
        });
    }

    let n = train_forcings.len();
    let mut mean = [0.0f64; 6];
    let mut std = [0.0f64; 6];
    for i in 0..5 {
        let column = train_forcings.records().iter().map(move |r| r.values()[i]);
        let (m, s) = population_stats(column, n);
        mean[i] = m;
        std[i] = s;
    }
    let q = train_discharge.records().iter().map(|r| r.discharge);
    let (m, s) = population_stats(q, train_discharge.len());
    mean[DISCHARGE_VAR] = m;
    std[DISCHARGE_VAR] = s;

    NormStats::new(mean, std)
}

// ---------------------------------------------------------------------------
// Windowing and splits
// ---------------------------------------------------------------------------

/// A normalized input window: `seq_len` × 5 matrix whose last row is the
/// prediction day itself.
#[derive(Debug, Clone, PartialEq)]
pub struct InputWindow {
    pub inputs: Array2<f64>,
    pub prediction_date: NaiveDate,
}

impl InputWindow {
    pub fn seq_len(&self) -> usize {
        self.inputs.nrows()
    }

    /// Calendar date of input row `t` (0-based): `prediction_date − (seq_len − 1 − t)`.
    pub fn date_of_row(&self, t: usize) -> NaiveDate {
        self.prediction_date - Days::new((self.seq_len() - 1 - t) as u64)
    }
}

/// An input window paired with its normalized discharge target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: InputWindow,
    /// Normalized discharge on the prediction day.
    pub target: f64,
}

impl Sample {
    pub fn inputs(&self) -> &Array2<f64> {
        &self.window.inputs
    }

    pub fn prediction_date(&self) -> NaiveDate {
        self.window.prediction_date
    }
}

/// Slides a `seq_len`-day window over the normalized forcings; window k
/// predicts day k + seq_len − 1. Yields exactly N − seq_len + 1 windows.
pub fn make_windows(
    forcings: &ForcingSeries,
    stats: &NormStats,
    seq_len: usize,
) -> Result<Vec<InputWindow>, DataError> {
    assert!(seq_len >= 1, "seq_len must be at least 1");
    let n = forcings.len();
    if n < seq_len {
        return Err(DataError::SeriesTooShort {
            needed: seq_len,
            got: n,
        });
    }
    let normalized = stats.normalize_forcings(&forcings.to_matrix());
    let records = forcings.records();
    Ok((0..=n - seq_len)
        .map(|k| InputWindow {
            inputs: normalized.slice(s![k..k + seq_len, ..]).to_owned(),
            prediction_date: records[k + seq_len - 1].date,
        })
        .collect())
}

/// [`make_windows`] plus the normalized discharge target for each window.
/// The two series must cover identical dates.
pub fn make_samples(
    forcings: &ForcingSeries,
    discharge: &DischargeSeries,
    stats: &NormStats,
    seq_len: usize,
) -> Result<Vec<Sample>, DataError> {
    if forcings.range() != discharge.range() {
        return Err(DataError::DateMismatch {
            left: format!("forcings {}", forcings.range()),
            right: format!("discharge {}", discharge.range()),
        });
    }
    let windows = make_windows(forcings, stats, seq_len)?;
    let records = discharge.records();
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(k, window)| Sample {
            window,
            target: stats.normalize_discharge(records[k + seq_len - 1].discharge),
        })
        .collect())
}

/// Chronological split policy: first `train_years` calendar years train the
/// model, the first `val_fraction` of the remaining days validate it, and the
/// rest is the test period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_years: u32,
    pub val_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_years: 15,
            val_fraction: 0.25,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.train_years == 0 {
            return Err(DataError::InvalidSplitSpec(
                "train_years must be at least 1".to_string(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(DataError::InvalidSplitSpec(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Partitions `range` into chronological, disjoint, exhaustive
/// (train, validation, test) ranges per `spec`. Validation length is
/// measured in exact days: ⌊val_fraction × remainder⌋.
pub fn split_periods(
    range: DateRange,
    spec: &SplitSpec,
) -> Result<(DateRange, DateRange, DateRange), DataError> {
    spec.validate()?;
    let train_end_excl = range.start + Months::new(12 * spec.train_years);
    if train_end_excl > range.end {
        return Err(DataError::SpanTooShort {
            got_days: range.days(),
            reason: format!("needs more than {} years of data", spec.train_years),
        });
    }
    let remainder_days = range.end.signed_duration_since(train_end_excl).num_days() + 1;
    let val_days = (remainder_days as f64 * spec.val_fraction).floor() as i64;
    if val_days < 1 || remainder_days - val_days < 1 {
        return Err(DataError::SpanTooShort {
            got_days: range.days(),
            reason: format!(
                "remainder of {remainder_days} days cannot hold both validation and test periods"
            ),
        });
    }

    let train = DateRange {
        start: range.start,
        end: train_end_excl - Days::new(1),
    };
    let val = DateRange {
        start: train_end_excl,
        end: train_end_excl + Days::new(val_days as u64 - 1),
    };
    let test = DateRange {
        start: val.end + Days::new(1),
        end: range.end,
    };
    Ok((train, val, test))
}

/// Samples of all three periods. Windows are built per period, so no window
/// straddles a split boundary; days within `seq_len − 1` of a period start
/// belong to no sample.
#[derive(Debug, Clone)]
pub struct SplitSamples {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Splits, computes train-period statistics, and windows each period.
pub fn build_split_samples(
    forcings: &ForcingSeries,
    discharge: &DischargeSeries,
    spec: &SplitSpec,
    seq_len: usize,
) -> Result<(NormStats, SplitSamples, (DateRange, DateRange, DateRange)), DataError> {
    if forcings.range() != discharge.range() {
        return Err(DataError::DateMismatch {
            left: format!("forcings {}", forcings.range()),
            right: format!("discharge {}", discharge.range()),
        });
    }
    let ranges = split_periods(forcings.range(), spec)?;
    let stats = compute_norm_stats(forcings, discharge, ranges.0)?;
    let mut period_samples = Vec::with_capacity(3);
    for range in [ranges.0, ranges.1, ranges.2] {
        let f = forcings.slice_range(range)?;
        let q = discharge.slice_range(range)?;
        period_samples.push(make_samples(&f, &q, &stats, seq_len)?);
    }
    let test = period_samples.pop().expect("three periods");
    let val = period_samples.pop().expect("three periods");
    let train = period_samples.pop().expect("three periods");
    Ok((stats, SplitSamples { train, val, test }, ranges))
}
