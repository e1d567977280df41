//! Hand-emitted SVG figures, no plotting dependency: a hydrograph with
//! inverted precipitation bars, the TSOI day-of-year quantile band with
//! seasonal reference panels, the cell/state correlation grid, and the
//! three-panel cell inspection. Output is deterministic: identical inputs
//! produce byte-identical files.

use chrono::NaiveDate;

use crate::analysis::{CellInspection, CorrelationReport, DoyQuantileCurve};
use crate::data::{InputWindow, FORCING_VARIABLES};
use crate::train::EvalRow;

const FIG_WIDTH: f64 = 900.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const PANEL_GAP: f64 = 34.0;
const COLOR_AXIS: &str = "#333333";
const COLOR_GRID: &str = "#dddddd";
const SERIES_COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 100.0 || (v.fract() == 0.0 && a < 1e6) {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Maps a data rectangle onto an SVG panel rectangle (y grows upward in data
/// space, downward in SVG space).
#[derive(Debug, Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.xmin) / (self.xmax - self.xmin) * self.width
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.ymin) / (self.ymax - self.ymin) * self.height
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        (min - 0.5, max + 0.5)
    } else {
        let pad = (max - min) * 0.05;
        (min - pad, max + pad)
    }
}

fn evenly_spaced_ticks(min: f64, max: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|k| min + (max - min) * k as f64 / count as f64)
        .collect()
}

fn polyline(frame: &Frame, points: &[(f64, f64)], color: &str, width: f64, dash: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let mut d = String::new();
    for (k, (x, y)) in points.iter().enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        d.push_str(&format!("{cmd}{} {} ", fmt(frame.x(*x)), fmt(frame.y(*y))));
    }
    let dash_attr = if dash.is_empty() {
        String::new()
    } else {
        format!(r#" stroke-dasharray="{dash}""#)
    };
    format!(
        r#"<path d="{}" fill="none" stroke="{color}" stroke-width="{width}"{dash_attr}/>"#,
        d.trim_end()
    )
}

fn panel_axes(out: &mut String, frame: &Frame, y_label: &str, y_ticks: &[f64]) {
    out.push_str(&format!(
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{COLOR_AXIS}" stroke-width="1"/>"#,
        fmt(frame.left),
        fmt(frame.top),
        fmt(frame.width),
        fmt(frame.height)
    ));
    for &tick in y_ticks {
        let y = frame.y(tick);
        out.push_str(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{COLOR_GRID}" stroke-width="0.5"/>"#,
            fmt(frame.left),
            fmt(y),
            fmt(frame.left + frame.width),
            fmt(y)
        ));
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10" fill="{COLOR_AXIS}">{}</text>"#,
            fmt(frame.left - 6.0),
            fmt(y + 3.5),
            tick_label(tick)
        ));
    }
    out.push_str(&format!(
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11" fill="{COLOR_AXIS}" transform="rotate(-90 14 {})">{}</text>"#,
        fmt(frame.top + frame.height / 2.0),
        fmt(frame.top + frame.height / 2.0),
        esc(y_label)
    ));
}

fn x_tick_dates(out: &mut String, frame: &Frame, dates: &[NaiveDate]) {
    let n = dates.len();
    if n < 2 {
        return;
    }
    let step = (n / 6).max(1);
    for k in (0..n).step_by(step) {
        let x = frame.x(k as f64);
        out.push_str(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#,
            fmt(x),
            fmt(frame.top + frame.height),
            fmt(x),
            fmt(frame.top + frame.height + 4.0)
        ));
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10" fill="{COLOR_AXIS}">{}</text>"#,
            fmt(x),
            fmt(frame.top + frame.height + 16.0),
            dates[k]
        ));
    }
}

fn x_tick_doy(out: &mut String, frame: &Frame) {
    for doy in (0..=360).step_by(60) {
        let x = frame.x(doy as f64);
        out.push_str(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{COLOR_AXIS}" stroke-width="1"/>"#,
            fmt(x),
            fmt(frame.top + frame.height),
            fmt(x),
            fmt(frame.top + frame.height + 4.0)
        ));
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10" fill="{COLOR_AXIS}">{doy}</text>"#,
            fmt(x),
            fmt(frame.top + frame.height + 16.0)
        ));
    }
}

fn svg_open(height: f64) -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {FIG_WIDTH} {height}" width="{FIG_WIDTH}" height="{height}">
<rect width="{FIG_WIDTH}" height="{height}" fill="white"/>
"#
    )
}

fn title(out: &mut String, text: &str) {
    out.push_str(&format!(
        r#"<text x="{}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14" fill="{COLOR_AXIS}">{}</text>"#,
        fmt(FIG_WIDTH / 2.0),
        esc(text)
    ));
    out.push('\n');
}

fn legend(out: &mut String, frame: &Frame, entries: &[(&str, &str, &str)]) {
    // entries: (label, color, dash)
    let mut x = frame.left + 8.0;
    let y = frame.top + 12.0;
    for (label, color, dash) in entries {
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        out.push_str(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"{dash_attr}/>"#,
            fmt(x),
            fmt(y - 3.0),
            fmt(x + 18.0),
            fmt(y - 3.0)
        ));
        out.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" fill="{COLOR_AXIS}">{}</text>"#,
            fmt(x + 22.0),
            fmt(y),
            esc(label)
        ));
        x += 22.0 + 7.0 * label.len() as f64 + 18.0;
    }
}

/// Observed vs simulated discharge with daily precipitation drawn upside down
/// from the top edge, darker where the minimum temperature is below freezing.
/// At most the trailing two years are drawn.
pub fn hydrograph_svg(rows: &[EvalRow], precip: &[f64], tmin: &[f64]) -> String {
    assert_eq!(rows.len(), precip.len());
    assert_eq!(rows.len(), tmin.len());
    let start = rows.len().saturating_sub(730);
    let rows = &rows[start..];
    let precip = &precip[start..];
    let tmin = &tmin[start..];

    let height = 360.0;
    let mut out = svg_open(height);
    title(&mut out, "Observed and simulated discharge");

    let (qmin, qmax) = span(rows.iter().flat_map(|r| [r.observed, r.simulated]));
    let frame = Frame {
        left: MARGIN_LEFT,
        top: 30.0,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: height - 80.0,
        xmin: 0.0,
        xmax: (rows.len() - 1).max(1) as f64,
        ymin: qmin.min(0.0),
        ymax: qmax,
    };
    panel_axes(
        &mut out,
        &frame,
        "discharge (mm/d)",
        &evenly_spaced_ticks(frame.ymin, frame.ymax, 4),
    );

    // precipitation bars hang from the top edge
    let pmax = precip.iter().copied().fold(1e-9f64, f64::max);
    let bar_scale = frame.height * 0.35 / pmax;
    let bar_w = (frame.width / rows.len() as f64).max(0.4);
    for (k, (&p, &t)) in precip.iter().zip(tmin).enumerate() {
        if p <= 0.0 {
            continue;
        }
        let color = if t < 0.0 { "#30506e" } else { "#9db8d2" };
        out.push_str(&format!(
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            fmt(frame.x(k as f64) - bar_w / 2.0),
            fmt(frame.top),
            fmt(bar_w),
            fmt(p * bar_scale)
        ));
    }

    let observed: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| (k as f64, r.observed))
        .collect();
    let simulated: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| (k as f64, r.simulated))
        .collect();
    out.push_str(&polyline(&frame, &observed, "#222222", 1.2, ""));
    out.push_str(&polyline(&frame, &simulated, "#d62728", 1.2, "5,3"));

    let dates: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect();
    x_tick_dates(&mut out, &frame, &dates);
    legend(
        &mut out,
        &frame,
        &[
            ("observed", "#222222", ""),
            ("simulated", "#d62728", "5,3"),
            ("precip (snow dark)", "#30506e", ""),
        ],
    );
    out.push_str("</svg>\n");
    out
}

fn reference_panel(
    out: &mut String,
    top: f64,
    panel_h: f64,
    label: &str,
    series: &[(u32, f64)],
    color: &str,
    zero_line: bool,
) -> f64 {
    let (ymin, ymax) = span(series.iter().map(|&(_, v)| v));
    let frame = Frame {
        left: MARGIN_LEFT,
        top,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: panel_h,
        xmin: 1.0,
        xmax: 366.0,
        ymin: ymin.min(if zero_line { -1.0 } else { ymin }),
        ymax,
    };
    panel_axes(out, &frame, label, &evenly_spaced_ticks(frame.ymin, frame.ymax, 3));
    if zero_line && frame.ymin < 0.0 && frame.ymax > 0.0 {
        let y0 = frame.y(0.0);
        out.push_str(&format!(
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888888" stroke-width="0.8" stroke-dasharray="2,2"/>"##,
            fmt(frame.left),
            fmt(y0),
            fmt(frame.left + frame.width),
            fmt(y0)
        ));
    }
    let points: Vec<(f64, f64)> = series.iter().map(|&(d, v)| (d as f64, v)).collect();
    out.push_str(&polyline(&frame, &points, color, 1.2, ""));
    top + panel_h + PANEL_GAP
}

/// TSOI quartile band over day of year, with median precipitation, discharge
/// and minimum temperature reference panels.
pub fn tsoi_quantile_svg(
    curve: &DoyQuantileCurve,
    precip_median: &[(u32, f64)],
    discharge_median: &[(u32, f64)],
    tmin_median: &[(u32, f64)],
) -> String {
    let main_h = 180.0;
    let ref_h = 80.0;
    let height = 30.0 + main_h + PANEL_GAP + 3.0 * (ref_h + PANEL_GAP) + 20.0;
    let mut out = svg_open(height);
    title(&mut out, "Time steps of influence by day of year");

    let ymax = curve.rows.iter().map(|r| r.q75).fold(1.0f64, f64::max) * 1.08;
    let frame = Frame {
        left: MARGIN_LEFT,
        top: 30.0,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: main_h,
        xmin: 1.0,
        xmax: 366.0,
        ymin: 0.0,
        ymax,
    };
    panel_axes(
        &mut out,
        &frame,
        "TSOI (days)",
        &evenly_spaced_ticks(0.0, ymax, 4),
    );

    // interquartile band
    if !curve.rows.is_empty() {
        let mut d = String::new();
        for (k, r) in curve.rows.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            d.push_str(&format!(
                "{cmd}{} {} ",
                fmt(frame.x(r.doy as f64)),
                fmt(frame.y(r.q75))
            ));
        }
        for r in curve.rows.iter().rev() {
            d.push_str(&format!(
                "L{} {} ",
                fmt(frame.x(r.doy as f64)),
                fmt(frame.y(r.q25))
            ));
        }
        d.push('Z');
        out.push_str(&format!(
            r##"<path d="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
            d.trim_end()
        ));
    }
    let median: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .map(|r| (r.doy as f64, r.q50))
        .collect();
    out.push_str(&polyline(&frame, &median, "#1f77b4", 1.6, ""));
    x_tick_doy(&mut out, &frame);
    legend(
        &mut out,
        &frame,
        &[("median", "#1f77b4", ""), ("quartile band", "#a6c8e4", "")],
    );

    let mut top = 30.0 + main_h + PANEL_GAP;
    top = reference_panel(&mut out, top, ref_h, "precip (mm/d)", precip_median, "#555555", false);
    top = reference_panel(&mut out, top, ref_h, "discharge (mm/d)", discharge_median, "#555555", false);
    reference_panel(&mut out, top, ref_h, "tmin (C)", tmin_median, "#555555", true);

    out.push_str("</svg>\n");
    out
}

/// Grid of mean cell/state correlations: blue for positive, red for negative,
/// opacity scaled by |ρ|; entries at or below the mask threshold are dimmed
/// and unlabeled.
pub fn correlation_grid_svg(report: &CorrelationReport, mask: f64) -> String {
    let cells = report.mean_rho.nrows();
    let states = report.mean_rho.ncols();
    let cell_px = 54.0;
    let left = 110.0;
    let top = 48.0;
    let height = top + cells as f64 * cell_px + 30.0;
    let mut out = svg_open(height);
    title(&mut out, "Mean correlation of memory cells with storage states");

    for (s, name) in report.state_names.iter().enumerate() {
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11" fill="{COLOR_AXIS}">{}</text>"#,
            fmt(left + (s as f64 + 0.5) * cell_px),
            fmt(top - 8.0),
            esc(name)
        ));
    }
    for c in 0..cells {
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11" fill="{COLOR_AXIS}">cell {c}</text>"#,
            fmt(left - 8.0),
            fmt(top + (c as f64 + 0.55) * cell_px)
        ));
        for s in 0..states {
            let rho = report.mean_rho[[c, s]];
            let x = left + s as f64 * cell_px;
            let y = top + c as f64 * cell_px;
            let shown = rho.abs() > mask;
            let (fill, opacity) = if !shown {
                ("#bbbbbb", 0.15)
            } else if rho >= 0.0 {
                ("#2166ac", rho.abs())
            } else {
                ("#b2182b", rho.abs())
            };
            out.push_str(&format!(
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" fill-opacity="{}" stroke="{COLOR_GRID}"/>"#,
                fmt(x + 1.0),
                fmt(y + 1.0),
                fmt(cell_px - 2.0),
                fmt(cell_px - 2.0),
                fmt(opacity)
            ));
            if shown {
                out.push_str(&format!(
                    r##"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10" fill="#111111">{rho:.2}</text>"##,
                    fmt(x + cell_px / 2.0),
                    fmt(y + cell_px / 2.0 + 3.0)
                ));
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Three aligned panels over one input window: per-variable attribution
/// traces, the memory-cell trajectory, and the physical temperature context.
pub fn cell_inspection_svg(inspection: &CellInspection, window: &InputWindow) -> String {
    let seq_len = window.seq_len();
    let dates: Vec<NaiveDate> = (0..seq_len).map(|t| window.date_of_row(t)).collect();
    let panel_h = 150.0;
    let height = 30.0 + 3.0 * (panel_h + PANEL_GAP) + 14.0;
    let mut out = svg_open(height);
    let target = format!("{}", inspection.attribution.target);
    title(
        &mut out,
        &format!("Integrated-gradients inspection of {target}"),
    );

    // panel 1: attribution per input variable
    let (amin, amax) = span(inspection.attribution.values.iter().copied());
    let frame = Frame {
        left: MARGIN_LEFT,
        top: 30.0,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: panel_h,
        xmin: 0.0,
        xmax: (seq_len - 1).max(1) as f64,
        ymin: amin,
        ymax: amax,
    };
    panel_axes(
        &mut out,
        &frame,
        "attribution",
        &evenly_spaced_ticks(amin, amax, 4),
    );
    let mut legend_entries: Vec<(&str, &str, &str)> = Vec::new();
    for (v, name) in FORCING_VARIABLES.iter().enumerate() {
        let points: Vec<(f64, f64)> = (0..seq_len)
            .map(|t| (t as f64, inspection.attribution.values[[t, v]]))
            .collect();
        out.push_str(&polyline(&frame, &points, SERIES_COLORS[v], 1.1, ""));
        legend_entries.push((name, SERIES_COLORS[v], ""));
    }
    legend(&mut out, &frame, &legend_entries);

    // panel 2: memory cell trajectory
    let top2 = 30.0 + panel_h + PANEL_GAP;
    let (cmin, cmax) = span(inspection.cell_trajectory.iter().copied());
    let frame2 = Frame {
        left: MARGIN_LEFT,
        top: top2,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: panel_h,
        xmin: 0.0,
        xmax: (seq_len - 1).max(1) as f64,
        ymin: cmin,
        ymax: cmax,
    };
    panel_axes(
        &mut out,
        &frame2,
        "cell value",
        &evenly_spaced_ticks(cmin, cmax, 4),
    );
    let cell_points: Vec<(f64, f64)> = inspection
        .cell_trajectory
        .iter()
        .enumerate()
        .map(|(t, &v)| (t as f64, v))
        .collect();
    out.push_str(&polyline(&frame2, &cell_points, "#2ca02c", 1.4, ""));

    // panel 3: physical temperatures with the freezing line
    let top3 = top2 + panel_h + PANEL_GAP;
    let (tmn, tmx) = span(inspection.temperatures.iter().copied());
    let frame3 = Frame {
        left: MARGIN_LEFT,
        top: top3,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: panel_h,
        xmin: 0.0,
        xmax: (seq_len - 1).max(1) as f64,
        ymin: tmn.min(-1.0),
        ymax: tmx.max(1.0),
    };
    panel_axes(
        &mut out,
        &frame3,
        "temperature (C)",
        &evenly_spaced_ticks(frame3.ymin, frame3.ymax, 4),
    );
    let y0 = frame3.y(0.0);
    out.push_str(&format!(
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888888" stroke-width="0.8" stroke-dasharray="2,2"/>"##,
        fmt(frame3.left),
        fmt(y0),
        fmt(frame3.left + frame3.width),
        fmt(y0)
    ));
    let tmin_pts: Vec<(f64, f64)> = (0..seq_len)
        .map(|t| (t as f64, inspection.temperatures[[t, 0]]))
        .collect();
    let tmax_pts: Vec<(f64, f64)> = (0..seq_len)
        .map(|t| (t as f64, inspection.temperatures[[t, 1]]))
        .collect();
    out.push_str(&polyline(&frame3, &tmin_pts, "#1f77b4", 1.1, ""));
    out.push_str(&polyline(&frame3, &tmax_pts, "#d62728", 1.1, ""));
    legend(
        &mut out,
        &frame3,
        &[("tmin", "#1f77b4", ""), ("tmax", "#d62728", "")],
    );
    x_tick_dates(&mut out, &frame3, &dates);

    out.push_str("</svg>\n");
    out
}

/// Per-epoch training curve: loss on the left axis, validation NSE on the
/// right, the selected epoch marked.
pub fn training_curve_svg(report: &crate::train::TrainReport) -> String {
    let height = 300.0;
    let mut out = svg_open(height);
    title(&mut out, "Training loss and validation NSE per epoch");

    let n = report.epochs.len();
    let (lmin, lmax) = span(report.epochs.iter().map(|e| e.train_loss));
    let frame = Frame {
        left: MARGIN_LEFT,
        top: 30.0,
        width: FIG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: height - 80.0,
        xmin: 0.0,
        xmax: (n - 1).max(1) as f64,
        ymin: lmin.min(0.0),
        ymax: lmax,
    };
    panel_axes(
        &mut out,
        &frame,
        "train loss",
        &evenly_spaced_ticks(frame.ymin, frame.ymax, 4),
    );
    let loss: Vec<(f64, f64)> = report
        .epochs
        .iter()
        .enumerate()
        .map(|(k, e)| (k as f64, e.train_loss))
        .collect();
    out.push_str(&polyline(&frame, &loss, "#d62728", 1.4, ""));

    // NSE rescaled into the same frame, clamped below at −1
    let nse_points: Vec<(f64, f64)> = report
        .epochs
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let clamped = e.val_nse.max(-1.0);
            let mapped = frame.ymin + (clamped + 1.0) / 2.0 * (frame.ymax - frame.ymin);
            (k as f64, mapped)
        })
        .collect();
    out.push_str(&polyline(&frame, &nse_points, "#1f77b4", 1.4, "4,3"));
    let sel = report.selected_epoch;
    out.push_str(&format!(
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#2ca02c" stroke-width="1.2" stroke-dasharray="2,2"/>"##,
        fmt(frame.x(sel as f64)),
        fmt(frame.top),
        fmt(frame.x(sel as f64)),
        fmt(frame.top + frame.height)
    ));
    legend(
        &mut out,
        &frame,
        &[
            ("train loss", "#d62728", ""),
            ("val NSE (scaled)", "#1f77b4", "4,3"),
            ("selected epoch", "#2ca02c", "2,2"),
        ],
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{doy_median, doy_quantiles, TsoiResult};
    use crate::train::EpochRecord;
    use chrono::Days;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn hydrograph_is_deterministic_and_wellformed() {
        let rows: Vec<EvalRow> = (0..200)
            .map(|k| EvalRow {
                date: d("2000-01-01") + Days::new(k),
                observed: 1.0 + (k % 17) as f64 * 0.3,
                simulated: 1.1 + (k % 13) as f64 * 0.3,
            })
            .collect();
        let precip: Vec<f64> = (0..200).map(|k| (k % 5) as f64).collect();
        let tmin: Vec<f64> = (0..200).map(|k| -5.0 + (k % 20) as f64).collect();
        let a = hydrograph_svg(&rows, &precip, &tmin);
        let b = hydrograph_svg(&rows, &precip, &tmin);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("observed"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn tsoi_figure_renders_band_and_panels() {
        let results: Vec<TsoiResult> = (0..600)
            .map(|k| {
                let date = d("2005-01-01") + Days::new(k);
                TsoiResult {
                    date,
                    doy: chrono::Datelike::ordinal(&date),
                    tsoi: 10 + (k % 120) as usize,
                }
            })
            .collect();
        let curve = doy_quantiles(&results).unwrap();
        let dates: Vec<NaiveDate> = results.iter().map(|r| r.date).collect();
        let flat: Vec<f64> = (0..600).map(|k| (k % 9) as f64).collect();
        let reference = doy_median(&dates, &flat);
        let svg = tsoi_quantile_svg(&curve, &reference, &reference, &reference);
        assert!(svg.contains("fill-opacity=\"0.25\"")); // the quartile band
        assert!(svg.matches("<rect").count() > 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn correlation_grid_masks_weak_entries() {
        let report = CorrelationReport {
            state_names: vec!["snow".into(), "soil".into()],
            mean_rho: ndarray::array![[0.9, 0.1], [-0.7, 0.4], [0.2, 0.55]],
            used_windows: ndarray::Array2::from_elem((3, 2), 10),
            skipped_windows: ndarray::Array2::zeros((3, 2)),
        };
        let svg = correlation_grid_svg(&report, 0.5);
        assert!(svg.contains("0.90"));
        assert!(svg.contains("-0.70"));
        assert!(!svg.contains("0.10"), "masked value must not be labeled");
        assert!(!svg.contains("0.40"));
    }

    #[test]
    fn training_curve_marks_selection() {
        let report = crate::train::TrainReport {
            epochs: vec![
                EpochRecord { train_loss: 1.0, val_nse: 0.1 },
                EpochRecord { train_loss: 0.5, val_nse: 0.6 },
                EpochRecord { train_loss: 0.4, val_nse: 0.5 },
            ],
            selected_epoch: 1,
            params: crate::lstm::ModelParams::zeros(5, 3),
        };
        let svg = training_curve_svg(&report);
        assert!(svg.contains("selected epoch"));
        assert!(!svg.contains("NaN"));
    }
}
