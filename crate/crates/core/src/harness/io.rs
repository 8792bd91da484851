//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svgd::TrajectoryRecord;

pub const TRAJECTORY_HEADER: &str = "iter,gamma,ksd2,kl,w1,h_norm,logdet_max";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iter,
            r.gamma,
            r.ksd2,
            opt(r.kl),
            opt(r.w1),
            r.h_norm,
            r.logdet_max
        );
    }
    s
}

/// Reads a numeric CSV, one row per point. A non-numeric first line is a header.
pub fn read_points(path: &Path) -> Result<(Vec<f64>, usize)> {
    let text = fs::read_to_string(path)?;
    parse_points(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_points(text: &str) -> std::result::Result<(Vec<f64>, usize), String> {
    let mut values = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = match row {
            Ok(r) => r,
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(format!("line {}: not a numeric row", idx + 1)),
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format!("line {}: expected {w} columns, found {}", idx + 1, row.len()))
            }
            _ => {}
        }
        values.extend(row);
    }
    match width {
        Some(w) => Ok((values, w)),
        None => Err("no data rows".into()),
    }
}

/// Line plot of `(x, y)` series, one panel per series. Non-finite points are skipped.
pub fn line_plot_svg(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const PANEL_H: f64 = 220.0;
    const PAD: f64 = 50.0;
    let height = PAD + series.len() as f64 * (PANEL_H + PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for (k, (name, pts)) in series.iter().enumerate() {
        let top = PAD + k as f64 * (PANEL_H + PAD);
        let (x0, x1, y0, y1) = (PAD + 20.0, W - 20.0, top + PANEL_H, top);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{PANEL_H}" fill="none" stroke="black"/>"#,
            x1 - x0
        );
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{}</text>"#, y1 - 6.0, escape(name));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, y0 + 32.0, escape(x_label));
        let pts: Vec<(f64, f64)> = pts.iter().copied().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
        if pts.is_empty() {
            continue;
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(a, b) in &pts {
            xmin = xmin.min(a);
            xmax = xmax.max(a);
            ymin = ymin.min(b);
            ymax = ymax.max(b);
        }
        if xmax <= xmin {
            xmax = xmin + 1.0;
        }
        if ymax <= ymin {
            ymax = ymin + 1.0;
        }
        let sx = |a: f64| x0 + (a - xmin) / (xmax - xmin) * (x1 - x0);
        let sy = |b: f64| y0 - (b - ymin) / (ymax - ymin) * (y0 - y1);
        let path: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for (v, y) in [(ymin, y0), (ymax, y1)] {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3e}</text>"#, x0 - 4.0, y + 4.0);
        }
        for (v, x) in [(xmin, x0), (xmax, x1)] {
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v}</text>"#, y0 + 16.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn trajectory_svg(title: &str, records: &[TrajectoryRecord]) -> String {
    let ksd: Vec<(f64, f64)> = records.iter().map(|r| (r.iter as f64, r.ksd2)).collect();
    let mut series = vec![("ksd2", ksd)];
    if records.iter().any(|r| r.kl.is_some()) {
        series.push(("kl", records.iter().filter_map(|r| r.kl.map(|k| (r.iter as f64, k))).collect()));
    }
    line_plot_svg(title, "iteration", &series)
}
