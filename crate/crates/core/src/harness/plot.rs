//! Minimal SVG line charts with confidence bands.
//!
//! Every plotted point carries `data-x`, `data-y` and `data-half-width`
//! attributes holding the exact CSV strings it was drawn from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentKind;
use super::experiments::BatchResult;
use super::output::AggregateRecord;
use crate::error::Result;
use crate::geometry::fmt_sig17;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, mean, half_width)`, in CSV row order.
    pub points: Vec<(f64, f64, f64)>,
}

/// Metrics charted for each experiment family.
pub fn chart_metrics(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Bounds => &[],
        ExperimentKind::Converge | ExperimentKind::Compare => &["D", "U"],
        ExperimentKind::Lifetime => &["D", "U", "alive_fraction"],
    }
}

/// Groups aggregate rows of one metric into series. Comparisons plot against
/// the communication radius, everything else against time.
pub fn collect_series(kind: ExperimentKind, records: &[AggregateRecord], metric: &str) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in records.iter().filter(|r| r.metric == metric) {
        let (name, x) = match kind {
            ExperimentKind::Compare => (format!("{} c={}", r.protocol, r.c_z), r.comm_radius),
            _ => (format!("{} r={} c={}", r.protocol, r.comm_radius, r.c_z), r.t),
        };
        let point = (x, r.mean, r.half_width);
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(point),
            None => out.push(Series { name, points: vec![point] }),
        }
    }
    out
}

fn finite(p: &(f64, f64, f64)) -> bool {
    p.0.is_finite() && p.1.is_finite()
}

fn band(p: &(f64, f64, f64)) -> f64 {
    if p.2.is_finite() {
        p.2
    } else {
        0.0
    }
}

/// Renders a chart, or `None` if no series has a finite point.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Option<String> {
    let pts: Vec<&(f64, f64, f64)> = series.iter().flat_map(|s| s.points.iter()).filter(|p| finite(p)).collect();
    if pts.is_empty() {
        return None;
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1 - band(p)), b.max(p.1 + band(p))));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left} {top} V{bottom} H{right}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(xv), bottom + 16.0, tick(xv));
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 18.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let good: Vec<&(f64, f64, f64)> = s.points.iter().filter(|p| finite(p)).collect();
        if good.is_empty() {
            continue;
        }
        let _ = writeln!(svg, r#"<g data-series="{}">"#, escape(&s.name));
        let upper: Vec<String> = good.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + band(p)))).collect();
        let lower: Vec<String> = good.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - band(p)))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = good.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        for p in &good {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" data-x="{}" data-y="{}" data-half-width="{}"/>"#,
                sx(p.0),
                sy(p.1),
                fmt_sig17(p.0),
                fmt_sig17(p.1),
                fmt_sig17(p.2)
            );
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, right - 150.0, escape(&s.name));
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `<experiment>_<metric>.svg` for each charted metric with data.
/// Metrics with no finite values are skipped with a warning on stderr.
pub fn write_charts(kind: ExperimentKind, records: &[AggregateRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let x_label = if kind == ExperimentKind::Compare { "communication radius" } else { "time" };
    for metric in chart_metrics(kind) {
        let series = collect_series(kind, records, metric);
        let title = format!("{} {metric}", kind.name());
        match render_svg(&title, x_label, metric, &series) {
            Some(svg) => {
                std::fs::create_dir_all(out_dir)?;
                let path = out_dir.join(format!("{}_{metric}.svg", kind.name()));
                std::fs::write(&path, svg)?;
                written.push(path);
            }
            None => eprintln!("warning: no data for {} {metric}; chart skipped", kind.name()),
        }
    }
    Ok(written)
}

/// Charts for a batch, drawn from exactly the rows its aggregate CSV holds.
pub fn emit_plots(batch: &BatchResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records: Vec<AggregateRecord> = batch.aggregate().iter().map(AggregateRecord::from).collect();
    write_charts(batch.experiment, &records, out_dir)
}
