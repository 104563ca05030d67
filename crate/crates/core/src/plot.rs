//! Static SVG rendering of the toolkit's standard figures.
//!
//! Three kinds: per-branch count trajectories over the season, the same
//! aggregated by tree, and a grid of per-stage regression panels with
//! scatter, fitted line and prediction band. Output is plain SVG with one
//! `<polyline>` per data series and one `<g class="panel">` per regression
//! panel, so tests (and scripts) can check structure by parsing the file.

use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

use crate::forecast::{pair_stage_with_harvest, CalibrationTable};
use crate::phenology::SeasonLedger;
use crate::regression::predict_with_interval;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("empty input: nothing to plot")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Trajectory,
    TreeAggregate,
    RegressionGrid,
}

/// Rendering parameters shared by all plot kinds.
#[derive(Debug, Clone, Copy)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub width: u32,
    pub height: u32,
    /// Coverage level of the prediction band in regression panels.
    pub level: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            kind: PlotKind::Trajectory,
            width: 900,
            height: 600,
            level: 0.95,
        }
    }
}

const SERIES_COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

struct Frame {
    width: f64,
    height: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1.0);
        MARGIN_LEFT + (v - self.x_min) / span * (self.width - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1.0);
        let inner = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + inner - (v - self.y_min) / span * inner
    }
}

fn svg_open(out: &mut String, width: u32, height: u32) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(
        out,
        "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    );
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = frame.width - MARGIN_RIGHT;
    let y0 = frame.height - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        out,
        "  <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "  <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        frame.height - 8.0,
        x_label
    );
    let _ = writeln!(
        out,
        "  <text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        y_label
    );
    // y tick labels at min and max
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.0}</text>",
        x0 - 4.0,
        y0,
        frame.y_min
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.0}</text>",
        x0 - 4.0,
        y1 + 4.0,
        frame.y_max
    );
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.1},{y:.1}"))
        .collect();
    let _ = writeln!(
        out,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
        coords.join(" ")
    );
}

fn day_number(date: NaiveDate, origin: NaiveDate) -> f64 {
    (date - origin).num_days() as f64
}

/// Render one series per key out of `(label, date series)` pairs.
fn render_series_plot(
    series: Vec<(String, Vec<(NaiveDate, i64)>)>,
    spec: &PlotSpec,
    y_label: &str,
) -> Result<String, PlotError> {
    if series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(PlotError::EmptyInput);
    }
    let origin = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(d, _)| *d))
        .min()
        .expect("non-empty checked above");
    let last = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(d, _)| *d))
        .max()
        .expect("non-empty checked above");
    let y_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(_, c)| *c))
        .max()
        .unwrap_or(1)
        .max(1);

    let frame = Frame {
        width: spec.width as f64,
        height: spec.height as f64,
        x_min: 0.0,
        x_max: day_number(last, origin).max(1.0),
        y_min: 0.0,
        y_max: y_max as f64,
    };

    let mut out = String::new();
    svg_open(&mut out, spec.width, spec.height);
    draw_axes(&mut out, &frame, &format!("days since {origin}"), y_label);

    for (i, (label, points)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let scaled: Vec<(f64, f64)> = points
            .iter()
            .map(|(d, c)| (frame.x(day_number(*d, origin)), frame.y(*c as f64)))
            .collect();
        polyline(&mut out, &scaled, color);
        for (x, y) in &scaled {
            let _ = writeln!(
                out,
                "  <circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.5\" fill=\"{color}\"/>"
            );
        }
        let _ = writeln!(
            out,
            "  <text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{label}</text>",
            frame.width - MARGIN_RIGHT + 8.0,
            MARGIN_TOP + 14.0 * i as f64 + 10.0,
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Season trajectory figure: one polyline per branch. Whole-tree harvest
/// records are point data, not trajectories, and are left out.
pub fn render_trajectory(ledger: &SeasonLedger, spec: &PlotSpec) -> Result<String, PlotError> {
    let series: Vec<(String, Vec<(NaiveDate, i64)>)> = ledger
        .branches()
        .into_iter()
        .filter(|(_, branch)| branch != crate::phenology::WHOLE_TREE)
        .map(|(tree, branch)| {
            let points = ledger
                .trajectory(&tree, &branch)
                .expect("listed branch resolves")
                .into_iter()
                .map(|p| (p.date, p.count))
                .collect();
            (format!("{tree}/{branch}"), points)
        })
        .collect();
    if series.is_empty() {
        return Err(PlotError::EmptyInput);
    }
    render_series_plot(series, spec, "objects counted")
}

/// Aggregated figure: one polyline per tree.
pub fn render_tree_aggregate(ledger: &SeasonLedger, spec: &PlotSpec) -> Result<String, PlotError> {
    let series: Vec<(String, Vec<(NaiveDate, i64)>)> =
        ledger.aggregate_by_tree().into_iter().collect();
    if series.is_empty() {
        return Err(PlotError::EmptyInput);
    }
    render_series_plot(series, spec, "objects counted (branch sum)")
}

/// Regression figure: one panel per calibration entry, each with the
/// branch scatter, the fitted line, a prediction band at `spec.level` when
/// interval statistics are available, and a slope/R² label.
pub fn render_regression_grid(
    ledger: &SeasonLedger,
    cal: &CalibrationTable,
    spec: &PlotSpec,
) -> Result<String, PlotError> {
    if cal.entries.is_empty() {
        return Err(PlotError::EmptyInput);
    }
    let panels = cal.entries.len();
    let cols = (panels as f64).sqrt().ceil() as usize;
    let rows = panels.div_ceil(cols);
    let panel_w = spec.width as f64 / cols as f64;
    let panel_h = spec.height as f64 / rows as f64;
    let pad = 34.0;

    let mut out = String::new();
    svg_open(&mut out, spec.width, spec.height);

    for (i, entry) in cal.entries.iter().enumerate() {
        let col = i % cols;
        let row = i / cols;
        let ox = col as f64 * panel_w;
        let oy = row as f64 * panel_h;
        let _ = writeln!(
            out,
            "  <g class=\"panel\" transform=\"translate({ox:.1},{oy:.1})\">"
        );

        let pairs = pair_stage_with_harvest(ledger, &entry.stage, cal.target);
        let x_max = pairs.iter().map(|p| p.x).fold(1.0_f64, f64::max);
        let y_max = pairs.iter().map(|p| p.y).fold(1.0_f64, f64::max);
        let sx = |v: f64| pad + v / x_max * (panel_w - 2.0 * pad);
        let sy = |v: f64| panel_h - pad - v / y_max * (panel_h - 2.0 * pad);

        let _ = writeln!(
            out,
            "    <rect x=\"{pad:.1}\" y=\"{pad:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"none\" stroke=\"#999\"/>",
            panel_w - 2.0 * pad,
            panel_h - 2.0 * pad
        );

        // Prediction band, drawn first so points stay visible.
        if let Some(full) = fit_from(&entry.fit) {
            let steps = 24;
            let mut upper_path: Vec<(f64, f64)> = Vec::with_capacity(steps + 1);
            let mut lower_path: Vec<(f64, f64)> = Vec::with_capacity(steps + 1);
            for s in 0..=steps {
                let x = x_max * s as f64 / steps as f64;
                if let Ok(pred) = predict_with_interval(&full, x, spec.level) {
                    upper_path.push((sx(x), sy(pred.upper.clamp(0.0, y_max))));
                    lower_path.push((sx(x), sy(pred.lower.clamp(0.0, y_max))));
                }
            }
            if !upper_path.is_empty() {
                let mut d = String::new();
                for (j, (x, y)) in upper_path.iter().enumerate() {
                    let _ = write!(d, "{}{x:.1} {y:.1} ", if j == 0 { "M" } else { "L" });
                }
                for (x, y) in lower_path.iter().rev() {
                    let _ = write!(d, "L{x:.1} {y:.1} ");
                }
                let _ = writeln!(
                    out,
                    "    <path d=\"{}Z\" fill=\"#1f77b4\" opacity=\"0.15\"/>",
                    d.trim_end()
                );
            }
        }

        for p in &pairs {
            let _ = writeln!(
                out,
                "    <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#1f77b4\"/>",
                sx(p.x),
                sy(p.y)
            );
        }

        // Fitted line clipped to the panel's count range.
        let fit = &entry.fit;
        let y_at = |x: f64| fit.slope * x + fit.intercept;
        let _ = writeln!(
            out,
            "    <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#d62728\" \
             stroke-width=\"1.5\"/>",
            sx(0.0),
            sy(y_at(0.0).clamp(0.0, y_max)),
            sx(x_max),
            sy(y_at(x_max).clamp(0.0, y_max)),
        );

        let r2_text = fit
            .r_squared
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|| "undef".to_string());
        let _ = writeln!(
            out,
            "    <text x=\"{pad:.1}\" y=\"{:.1}\">{} BBCH {}</text>",
            pad - 18.0,
            entry.stage.date,
            entry.stage.bbch
        );
        let _ = writeln!(
            out,
            "    <text x=\"{pad:.1}\" y=\"{:.1}\">slope {:.2}, R² {}</text>",
            pad - 5.0,
            fit.slope,
            r2_text
        );
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn fit_from(fit: &crate::forecast::StageFit) -> Option<crate::Fit> {
    fit.interval.map(|iv| crate::Fit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        p_value: fit.p_value,
        n: fit.n,
        residual_se: iv.residual_se,
        sxx: iv.sxx,
        mean_x: iv.mean_x,
        mean_y: iv.mean_y,
    })
}

/// Count structural elements of an SVG: how many times `needle` opens.
pub fn count_elements(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}
