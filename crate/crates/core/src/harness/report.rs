use std::fmt::Write;

use super::search::RunRecord;
use crate::error::{Error, Result};
use crate::metrics::METRIC_COLUMNS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// A fraction printed as a percentage at two decimals, rounding exact (or float-noise) ties to
/// even. Non-finite values print as `NA`.
pub fn format_percent(v: f64) -> String {
    if !v.is_finite() {
        return "NA".into();
    }
    let scaled = v * 10_000.0;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let rounded = if (frac - 0.5).abs() <= 1e-9 * scaled.abs().max(1.0) {
        if floor.rem_euclid(2.0) == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        scaled.round()
    };
    let out = rounded / 100.0;
    format!("{:.2}", if out == 0.0 { 0.0 } else { out })
}

/// Metric means over the successful runs of one (dataset, model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    /// `None` when every run of the pair failed.
    pub values: Option<[f64; 6]>,
    pub runs: usize,
}

/// Rows in order of first appearance; several seeds of a pair are averaged.
pub fn aggregate(records: &[RunRecord]) -> Vec<TableRow> {
    let mut rows: Vec<(TableRow, [f64; 6])> = Vec::new();
    for r in records {
        let pos = match rows
            .iter()
            .position(|(row, _)| row.dataset == r.dataset && row.model == r.model.label())
        {
            Some(p) => p,
            None => {
                rows.push((
                    TableRow {
                        dataset: r.dataset.clone(),
                        model: r.model.label().to_string(),
                        values: None,
                        runs: 0,
                    },
                    [0.0; 6],
                ));
                rows.len() - 1
            }
        };
        if let Some(test) = &r.test {
            let (row, sums) = &mut rows[pos];
            row.runs += 1;
            sums.iter_mut().zip(test.values()).for_each(|(s, v)| *s += v);
        }
    }
    rows.into_iter()
        .map(|(mut row, sums)| {
            if row.runs > 0 {
                row.values = Some(sums.map(|s| s / row.runs as f64));
            }
            row
        })
        .collect()
}

/// One row per (dataset, model) with the six metrics in percent.
pub fn emit_table(records: &[RunRecord], format: TableFormat) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Config("no run records to tabulate".into()));
    }
    let header: Vec<&str> = ["Dataset", "Model"].into_iter().chain(METRIC_COLUMNS).collect();
    let mut out = String::new();
    let line = |cells: &[String]| match format {
        TableFormat::Csv => format!("{}\n", cells.join(",")),
        TableFormat::Markdown => format!("| {} |\n", cells.join(" | ")),
    };
    out.push_str(&line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    if format == TableFormat::Markdown {
        out.push_str(&line(&vec!["---".to_string(); header.len()]));
    }
    for row in aggregate(records) {
        let mut cells = vec![csv_escape(&row.dataset), csv_escape(&row.model)];
        match row.values {
            Some(v) => cells.extend(v.iter().map(|x| format_percent(*x / 100.0))),
            None => cells.extend(std::iter::repeat_n("NA".to_string(), 6)),
        }
        out.push_str(&line(&cells));
    }
    Ok(out)
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '|']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const RADAR_AXES: [&str; 3] = ["nDCG", "ΔnDCG", "APLT"];

/// Raw (nDCG, ΔnDCG, APLT) per model for one dataset, seed-averaged.
pub fn radar_values(records: &[RunRecord], dataset: &str) -> Vec<(String, [f64; 3])> {
    aggregate(records)
        .into_iter()
        .filter(|r| r.dataset == dataset)
        .filter_map(|r| r.values.map(|v| (r.model, [v[1], v[3], v[4]])))
        .collect()
}

/// Per-axis min-max scaling into [0, 1] (1 when all values agree), with
/// ΔnDCG flipped so that larger is better on every axis.
pub fn normalize_for_radar(values: &[(String, [f64; 3])]) -> Vec<(String, [f64; 3])> {
    let mut out: Vec<(String, [f64; 3])> = values.to_vec();
    for axis in 0..3 {
        let min = values.iter().map(|(_, v)| v[axis]).fold(f64::INFINITY, f64::min);
        let max = values.iter().map(|(_, v)| v[axis]).fold(f64::NEG_INFINITY, f64::max);
        for (o, (_, v)) in out.iter_mut().zip(values) {
            let scaled = if max > min { (v[axis] - min) / (max - min) } else { 1.0 };
            o.1[axis] = if axis == 1 { 1.0 - scaled } else { scaled };
        }
    }
    // a flat ΔnDCG axis stays at 1 rather than flipping to 0
    let flat = values.iter().all(|(_, v)| v[1] == values[0].1[1]);
    if flat {
        out.iter_mut().for_each(|o| o.1[1] = 1.0);
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Three-axis Kiviat chart; each entry is a model label and its normalized triple.
pub fn emit_radar_svg(title: &str, entries: &[(String, [f64; 3])]) -> String {
    const SIZE: f64 = 440.0;
    const RADIUS: f64 = 150.0;
    let (cx, cy) = (SIZE / 2.0, SIZE / 2.0 + 10.0);
    let angle = |axis: usize| (-90.0 + 120.0 * axis as f64).to_radians();
    let point = |axis: usize, r: f64| (cx + r * RADIUS * angle(axis).cos(), cy + r * RADIUS * angle(axis).sin());
    let legend_h = 22.0 * entries.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{}" viewBox="0 0 {SIZE} {}" font-family="sans-serif" font-size="13">"#,
        SIZE + legend_h + 20.0,
        SIZE + legend_h + 20.0
    );
    let _ = writeln!(s, r#"  <title>{}</title>"#, xml_escape(title));
    let _ = writeln!(
        s,
        r#"  <text x="{cx}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        xml_escape(title)
    );
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<String> = (0..3)
            .map(|a| {
                let (x, y) = point(a, ring);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r##"  <path class="ring" d="M {} Z" fill="none" stroke="#ccc"/>"##,
            pts.join(" L ")
        );
    }
    for (a, label) in RADAR_AXES.iter().enumerate() {
        let (x, y) = point(a, 1.0);
        let (lx, ly) = point(a, 1.12);
        let _ = writeln!(
            s,
            r##"  <line class="axis" x1="{cx}" y1="{cy}" x2="{x:.2}" y2="{y:.2}" stroke="#888"/>"##
        );
        let _ = writeln!(
            s,
            r#"  <text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" dominant-baseline="middle">{label}</text>"#
        );
    }
    for (m, (label, v)) in entries.iter().enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        let pts: Vec<String> = (0..3)
            .map(|a| {
                let (x, y) = point(a, v[a].clamp(0.0, 1.0));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"  <polygon class="model" data-model="{}" points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"/>"#,
            xml_escape(label),
            pts.join(" ")
        );
    }
    for (m, (label, _)) in entries.iter().enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        let y = SIZE + 10.0 + 22.0 * m as f64;
        let _ = writeln!(s, r#"  <rect x="20" y="{y}" width="14" height="14" fill="{color}"/>"#);
        let _ = writeln!(s, r#"  <text x="42" y="{:.1}">{}</text>"#, y + 12.0, xml_escape(label));
    }
    s.push_str("</svg>\n");
    s
}
