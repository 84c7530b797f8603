//! Deterministic SVG figures: scatter with trend line, residual scatter,
//! bar chart, and grouped point comparison.
//!
//! Every figure is an 800x600 canvas. Axis ranges are the data range padded
//! by 5% of its span on each side, ticks sit on round 1/2/5 multiples with at
//! most ten per axis, and the plot area carries `data-*` attributes with the
//! exact ranges (and trend parameters) so output can be checked
//! programmatically.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::analysis::trend_line;
use crate::error::{Error, Result};
use crate::kv::fmt_f64;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const AXIS_PADDING: f64 = 0.05;
pub const MAX_TICKS: usize = 10;

const LEFT: f64 = 100.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    ScatterTrend,
    Residual,
    Bar,
    GroupedComparison,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    Points { name: String, points: Vec<(f64, f64)> },
    Categories { name: String, values: Vec<(String, f64)> },
}

impl Series {
    pub fn name(&self) -> &str {
        match self {
            Series::Points { name, .. } | Series::Categories { name, .. } => name,
        }
    }

    fn len(&self) -> usize {
        match self {
            Series::Points { points, .. } => points.len(),
            Series::Categories { values, .. } => values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub output_path: PathBuf,
}

/// Axis range after padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl AxisRange {
    /// `[lo, hi]` widened by 5% of its span on each side. A degenerate range
    /// is widened by 5% of its magnitude (or by 1 around zero).
    pub fn padded(lo: f64, hi: f64) -> Self {
        let span = hi - lo;
        let pad = if span > 0.0 {
            AXIS_PADDING * span
        } else if lo != 0.0 {
            AXIS_PADDING * lo.abs()
        } else {
            1.0
        };
        Self {
            min: lo - pad,
            max: hi + pad,
        }
    }

    fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Round tick positions inside `range`: multiples of 1, 2 or 5 times a power
/// of ten, the finest such step giving at most [`MAX_TICKS`] ticks.
pub fn ticks(range: AxisRange) -> Vec<f64> {
    let span = range.span();
    if !(span > 0.0) || !span.is_finite() {
        return vec![range.min];
    }
    let mut exp = (span / MAX_TICKS as f64).log10().floor() as i32 - 1;
    loop {
        for m in [1.0, 2.0, 5.0] {
            let step = m * 10f64.powi(exp);
            let first = (range.min / step).ceil() as i64;
            let last = (range.max / step).floor() as i64;
            if last - first + 1 <= MAX_TICKS as i64 {
                return (first..=last).map(|k| k as f64 * step).collect();
            }
        }
        exp += 1;
    }
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    if v.abs() >= 1e6 {
        format!("{v:.3e}")
    } else {
        format!("{v:.decimals$}")
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn validate(spec: &FigureSpec) -> Result<()> {
    if spec.series.is_empty() || spec.series.iter().any(|s| s.len() == 0) {
        return Err(Error::NonFiniteData(format!("figure {:?} has an empty series", spec.title)));
    }
    for s in &spec.series {
        let finite = match s {
            Series::Points { points, .. } => points.iter().all(|(x, y)| x.is_finite() && y.is_finite()),
            Series::Categories { values, .. } => values.iter().all(|(_, v)| v.is_finite()),
        };
        if !finite {
            return Err(Error::NonFiniteData(format!("series {:?} has a non-finite value", s.name())));
        }
    }
    let points = spec.series.iter().all(|s| matches!(s, Series::Points { .. }));
    let categories = spec.series.iter().all(|s| matches!(s, Series::Categories { .. }));
    let ok = match spec.kind {
        FigureKind::ScatterTrend | FigureKind::Residual | FigureKind::GroupedComparison => points,
        FigureKind::Bar => categories && spec.series.len() == 1,
    };
    if !ok {
        return Err(Error::InvalidConfig(format!("series do not fit a {:?} figure", spec.kind)));
    }
    Ok(())
}

fn points_of(spec: &FigureSpec) -> impl Iterator<Item = (f64, f64)> + '_ {
    spec.series.iter().flat_map(|s| match s {
        Series::Points { points, .. } => points.clone(),
        Series::Categories { .. } => Vec::new(),
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

struct Frame {
    x: AxisRange,
    y: AxisRange,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.min) / self.x.span() * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.min) / self.y.span() * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders the figure to an SVG document.
pub fn render_svg(spec: &FigureSpec) -> Result<String> {
    validate(spec)?;
    let (frame, trend) = match spec.kind {
        FigureKind::Bar => {
            let Series::Categories { values, .. } = &spec.series[0] else { unreachable!() };
            let (lo, hi) = min_max(values.iter().map(|(_, v)| *v));
            let x = AxisRange {
                min: 0.0,
                max: values.len() as f64,
            };
            (Frame { x, y: AxisRange::padded(lo.min(0.0), hi.max(0.0)) }, None)
        }
        _ => {
            let (xlo, xhi) = min_max(points_of(spec).map(|p| p.0));
            let (mut ylo, mut yhi) = min_max(points_of(spec).map(|p| p.1));
            if spec.kind == FigureKind::Residual {
                ylo = ylo.min(0.0);
                yhi = yhi.max(0.0);
            }
            let trend = if spec.kind == FigureKind::ScatterTrend {
                let (xs, ys): (Vec<f64>, Vec<f64>) = points_of(spec).unzip();
                Some(trend_line(&xs, &ys).map_err(|_| {
                    Error::NonFiniteData(format!("figure {:?} needs two distinct x values for a trend", spec.title))
                })?)
            } else {
                None
            };
            (
                Frame {
                    x: AxisRange::padded(xlo, xhi),
                    y: AxisRange::padded(ylo, yhi),
                },
                trend,
            )
        }
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let mut area = format!(
        r#"<g class="plot-area" data-kind="{:?}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}""#,
        spec.kind,
        fmt_f64(frame.x.min),
        fmt_f64(frame.x.max),
        fmt_f64(frame.y.min),
        fmt_f64(frame.y.max)
    );
    if let Some((slope, intercept)) = trend {
        let _ = write!(area, r#" data-trend-slope="{}" data-trend-intercept="{}""#, fmt_f64(slope), fmt_f64(intercept));
    }
    area.push('>');
    s.push_str(&area);
    s.push('\n');
    axes(&mut s, spec, &frame);

    match spec.kind {
        FigureKind::Bar => {
            let Series::Categories { values, .. } = &spec.series[0] else { unreachable!() };
            let base = frame.py(0.0);
            for (i, (label, v)) in values.iter().enumerate() {
                let x0 = frame.px(i as f64 + 0.15);
                let x1 = frame.px(i as f64 + 0.85);
                let y = frame.py(*v);
                let _ = writeln!(
                    s,
                    r#"<rect class="bar" data-label="{}" data-value="{}" x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    escape(label),
                    fmt_f64(*v),
                    y.min(base),
                    x1 - x0,
                    (base - y).abs(),
                    PALETTE[0]
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    frame.px(i as f64 + 0.5),
                    HEIGHT - BOTTOM + 18.0,
                    escape(label)
                );
            }
        }
        _ => {
            if spec.kind == FigureKind::Residual {
                let y0 = frame.py(0.0);
                let _ = writeln!(
                    s,
                    r##"<line class="zero" x1="{LEFT:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
                    WIDTH - RIGHT
                );
            }
            for (k, series) in spec.series.iter().enumerate() {
                let Series::Points { name, points } = series else { unreachable!() };
                let color = PALETTE[k % PALETTE.len()];
                let _ = writeln!(s, r#"<g class="series" data-name="{}" fill="{color}" fill-opacity="0.6">"#, escape(name));
                for (x, y) in points {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, frame.px(*x), frame.py(*y));
                }
                s.push_str("</g>\n");
            }
            if let Some((slope, intercept)) = trend {
                let (x0, x1) = (frame.x.min, frame.x.max);
                let _ = writeln!(
                    s,
                    r##"<line class="trend" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-width="1.5"/>"##,
                    frame.px(x0),
                    frame.py(slope * x0 + intercept),
                    frame.px(x1),
                    frame.py(slope * x1 + intercept)
                );
            }
            if spec.series.len() > 1 {
                legend(&mut s, spec);
            }
        }
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

fn axes(s: &mut String, spec: &FigureSpec, frame: &Frame) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r##"<rect class="frame" x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
        x1 - x0,
        y0 - y1
    );
    if spec.kind != FigureKind::Bar {
        let xt = ticks(frame.x);
        let step = if xt.len() > 1 { xt[1] - xt[0] } else { 1.0 };
        for t in &xt {
            let px = frame.px(*t);
            let _ = writeln!(
                s,
                r##"<g class="x-tick" data-value="{}"><line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text></g>"##,
                fmt_f64(*t),
                y0 + 5.0,
                y0 + 18.0,
                tick_label(*t, step)
            );
        }
    }
    let yt = ticks(frame.y);
    let step = if yt.len() > 1 { yt[1] - yt[0] } else { 1.0 };
    for t in &yt {
        let py = frame.py(*t);
        let _ = writeln!(
            s,
            r##"<g class="y-tick" data-value="{}"><line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text></g>"##,
            fmt_f64(*t),
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(*t, step)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 20.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&spec.y_label)
    );
}

fn legend(s: &mut String, spec: &FigureSpec) {
    s.push_str("<g class=\"legend\">\n");
    for (k, series) in spec.series.iter().enumerate() {
        let y = TOP + 15.0 + 18.0 * k as f64;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            x + 15.0,
            y,
            escape(series.name())
        );
    }
    s.push_str("</g>\n");
}

/// Renders and writes the figure to `spec.output_path`.
pub fn write_svg(spec: &FigureSpec) -> Result<()> {
    let svg = render_svg(spec)?;
    std::fs::write(&spec.output_path, svg)?;
    Ok(())
}
