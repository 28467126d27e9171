use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::sim::RunReport;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!(
                "unknown report format '{s}' (expected table, csv or json)"
            )),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

type Metric = fn(&RunReport) -> Option<f64>;

/// Row label, value and table decimals for each reported metric.
const ROWS: [(&str, Metric, usize); 5] = [
    ("Latency (ms/image)", |r| Some(r.latency_ms_per_image), 1),
    (
        "Throughput (images/s)",
        |r| Some(r.throughput_images_per_s),
        1,
    ),
    ("Power Consumption (W)", |r| Some(r.power_w), 1),
    (
        "Energy Efficiency (images/s/W)",
        |r| Some(r.efficiency_images_per_s_per_w),
        2,
    ),
    ("Top-1 Accuracy (%)", |r| r.top1_accuracy, 1),
];

fn table(reports: &[RunReport]) -> String {
    let label_width = ROWS
        .iter()
        .map(|(l, _, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("Metric".len());
    let cells: Vec<Vec<String>> = ROWS
        .iter()
        .map(|(_, get, decimals)| {
            reports
                .iter()
                .map(|r| get(r).map_or_else(|| "n/a".into(), |v| format!("{v:.decimals$}")))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = reports
        .iter()
        .enumerate()
        .map(|(j, r)| {
            cells
                .iter()
                .map(|row| row[j].len())
                .max()
                .unwrap_or(0)
                .max(r.label.len())
        })
        .collect();

    let mut out = format!("{:<label_width$}", "Metric");
    for (r, w) in reports.iter().zip(&widths) {
        out.push_str(&format!("  {:>w$}", r.label));
    }
    out.push('\n');
    for ((label, _, _), row) in ROWS.iter().zip(&cells) {
        out.push_str(&format!("{label:<label_width$}"));
        for (cell, w) in row.iter().zip(&widths) {
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}

fn csv(reports: &[RunReport]) -> String {
    let mut out = String::from("metric");
    for r in reports {
        out.push(',');
        out.push_str(&r.label);
    }
    out.push('\n');
    for (label, get, _) in ROWS {
        out.push('"');
        out.push_str(label);
        out.push('"');
        for r in reports {
            out.push(',');
            if let Some(v) = get(r) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_report(reports: &[RunReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => table(reports),
        ReportFormat::Csv => csv(reports),
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(reports).expect("reports serialize");
            text.push('\n');
            text
        }
    }
}

pub fn emit_report(reports: &[RunReport], format: ReportFormat, path: &Path) -> Result<(), Error> {
    std::fs::write(path, render_report(reports, format)).map_err(|e| Error::io(path, e))
}

pub fn load_reports_json(path: &Path) -> Result<Vec<RunReport>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
