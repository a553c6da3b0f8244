//! CSV, JSON and SVG reports of ledger records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::ledger::Record;

pub const CSV_HEADER: &str = "scenario_id,t_or_r,value,error,margin,pass";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// One row per record; floats with 17 significant digits so they re-parse exactly.
pub fn to_csv(records: &[Record]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.scenario_id, r.t_or_r, r.value, r.error, r.margin, r.pass
        )
        .expect("string write");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub scenario_id: String,
    pub t_or_r: f64,
    pub value: f64,
    pub error: f64,
    pub margin: f64,
    pub pass: bool,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |line: usize, what: &str| HarnessError::InvalidConfig(format!("csv line {line}: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 2, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            Ok(CsvRow {
                scenario_id: f[0].to_string(),
                t_or_r: num(f[1])?,
                value: num(f[2])?,
                error: num(f[3])?,
                margin: num(f[4])?,
                pass: f[5].parse().map_err(|_| bad(i + 2, "bad flag"))?,
            })
        })
        .collect()
}

pub fn to_json(records: &[Record]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Margin against t (or r), one polyline per scenario id with at least two records.
pub fn to_svg(records: &[Record]) -> String {
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for r in records {
        if !r.t_or_r.is_finite() || !r.margin.is_finite() || r.note.as_deref().is_some_and(|n| n.starts_with("r0") || n.starts_with("min r0")) {
            continue;
        }
        match series.iter_mut().find(|(id, _)| *id == r.scenario_id) {
            Some((_, pts)) => pts.push((r.t_or_r, r.margin)),
            None => series.push((&r.scenario_id, vec![(r.t_or_r, r.margin)])),
        }
    }
    series.retain(|(_, p)| p.len() >= 2);
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        (x0, x1) = (0.0, 1.0);
    }
    if !(y1 > y0) {
        let c = if y0.is_finite() { y0 } else { 0.0 };
        (y0, y1) = (c - 1.0, c + 1.0);
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2}" stroke="black" fill="none"/>"#,
        PAD,
        PAD,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    )
    .unwrap();
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{fx:.3}</text>"#, sx(fx), H - PAD + 14.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{fy:.2e}</text>"#, PAD - 4.0, sy(fy) + 3.0).unwrap();
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">t or r</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(s, r#"<text x="14" y="{:.2}" font-size="12" transform="rotate(-90 14 {:.2})" text-anchor="middle">margin</text>"#, H / 2.0, H / 2.0).unwrap();
    for (i, (id, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(j, &(x, y))| format!("{}{:.2} {:.2}", if j == 0 { "M" } else { "L" }, sx(x), sy(y)))
            .collect();
        writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, d.join(" ")).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{color}">{}</text>"#, W - PAD + 4.0 - 120.0, PAD + 12.0 * i as f64, xml_escape(id)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.<ext>` for each format into `dir`; returns the paths written.
pub fn emit_report(records: &[Record], formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            Format::Csv => ("report.csv", to_csv(records)),
            Format::Json => ("report.json", to_json(records)),
            Format::Svg => ("report.svg", to_svg(records)),
        };
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
