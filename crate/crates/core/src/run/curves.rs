//! Loss-curve logs, CSV tables and standalone SVG line plots.

use std::fmt::Write as _;

use super::trainer::EpochLog;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,train_loss,val_loss";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const Y_TICKS: usize = 5;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One line of JSON per epoch, keys in fixed order.
pub fn logs_to_jsonl(logs: &[EpochLog]) -> String {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("epoch log serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_metrics_log(text: &str) -> Result<Vec<EpochLog>> {
    let mut logs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let log: EpochLog = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            line: i + 1,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(Error::Data("metrics log has no entries".into()));
    }
    Ok(logs)
}

pub fn curves_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for log in logs {
        let val = log.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", log.epoch, log.train_loss, val);
    }
    out
}

/// A named polyline for [`line_plot_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series as a standalone SVG. Output depends only on the inputs.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Data("nothing to plot".into()));
    }
    if all.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Numeric("plot points must be finite".into()));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        all.iter().map(pick).fold(init, f)
    };
    let (mut x0, mut x1) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let (mut y0, mut y1) = (fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=Y_TICKS {
        let v = y0 + (y1 - y0) * i as f64 / Y_TICKS as f64;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            MARGIN_LEFT + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    for v in [x0, x1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(v),
            MARGIN_TOP + ph + 18.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 16.0 + 20.0 * i as f64;
        let lx = MARGIN_LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Train and validation loss per epoch.
pub fn curves_svg(title: &str, logs: &[EpochLog]) -> Result<String> {
    let train = Series::new("train", logs.iter().map(|l| (l.epoch as f64, l.train_loss)).collect());
    let val: Vec<(f64, f64)> = logs.iter().filter_map(|l| Some((l.epoch as f64, l.val_loss?))).collect();
    let mut series = vec![train];
    if !val.is_empty() {
        series.push(Series::new("validation", val));
    }
    line_plot_svg(title, "epoch", "loss", &series)
}
