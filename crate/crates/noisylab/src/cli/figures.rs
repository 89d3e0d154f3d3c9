//! Run summaries and hand-emitted SVG line charts over metrics CSVs. Chart
//! emission is a pure function of the CSV bytes, so re-emission is
//! byte-identical.

use super::{ensure_dir, write_json, write_manifest, EXIT_OK};
use crate::error::{Error, Result};
use crate::trainer::METRICS_CSV_HEADER;
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Parsed metrics CSV: column names plus rows of optional values (the
/// validation column is empty when early stopping was off).
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn parse_metrics_csv(text: &str) -> Result<MetricsTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty metrics CSV".into()))?;
    if header != METRICS_CSV_HEADER {
        return Err(Error::InvalidParameter(format!("unexpected metrics header: {header}")));
    }
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<Option<f64>>, _> = line
            .split(',')
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some)
                }
            })
            .collect();
        let row = row.map_err(|e| Error::InvalidParameter(format!("bad metrics cell: {e}")))?;
        if row.len() != columns.len() {
            return Err(Error::InvalidParameter("ragged metrics CSV".into()));
        }
        rows.push(row);
    }
    Ok(MetricsTable { columns, rows })
}

impl MetricsTable {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// (epoch, value) pairs of a named column, skipping empty cells.
    pub fn series(&self, name: &str) -> Vec<(f64, f64)> {
        let Some(col) = self.column(name) else { return Vec::new() };
        let epoch = self.column("epoch").expect("header is pinned");
        self.rows
            .iter()
            .filter_map(|row| match (row[epoch], row[col]) {
                (Some(e), Some(v)) => Some((e, v)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories holding metrics.csv, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub runs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunSummary {
    run: String,
    recorded_epochs: usize,
    final_epoch: f64,
    final_train_acc: f64,
    final_train_loss: f64,
    final_test_acc: f64,
    final_test_loss: f64,
    final_test_entropy: f64,
    max_test_acc: f64,
}

pub fn report(out: &Path, args: ReportArgs) -> Result<i32> {
    let mut summaries = Vec::new();
    for run in &args.runs {
        let text = std::fs::read_to_string(run.join("metrics.csv"))?;
        let table = parse_metrics_csv(&text)?;
        let last = |name: &str| {
            table
                .series(name)
                .last()
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::InvalidParameter(format!("no data for column {name}")))
        };
        let test_acc = table.series("test_acc");
        summaries.push(RunSummary {
            run: run.display().to_string(),
            recorded_epochs: table.rows.len(),
            final_epoch: last("epoch")?,
            final_train_acc: last("train_acc")?,
            final_train_loss: last("train_loss")?,
            final_test_acc: last("test_acc")?,
            final_test_loss: last("test_loss")?,
            final_test_entropy: last("test_entropy")?,
            max_test_acc: test_acc.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max),
        });
    }

    ensure_dir(out)?;
    let csv_path = out.join("summary.csv");
    let mut csv = String::from(
        "run,recorded_epochs,final_epoch,final_train_acc,final_train_loss,final_test_acc,final_test_loss,final_test_entropy,max_test_acc\n",
    );
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.run,
            s.recorded_epochs,
            s.final_epoch,
            s.final_train_acc,
            s.final_train_loss,
            s.final_test_acc,
            s.final_test_loss,
            s.final_test_entropy,
            s.max_test_acc
        ));
    }
    std::fs::write(&csv_path, &csv)?;
    let json_path = out.join("summary.json");
    write_json(&json_path, &summaries)?;
    print!("{csv}");
    write_manifest(
        out,
        "report",
        serde_json::json!({
            "runs": args.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
        0,
        &[&csv_path, &json_path],
    )?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct FiguresArgs {
    /// Metrics CSV to chart.
    #[arg(long)]
    pub metrics: PathBuf,
}

pub fn figures(out: &Path, args: FiguresArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.metrics)?;
    let table = parse_metrics_csv(&text)?;
    ensure_dir(out)?;

    let accuracy_path = out.join("accuracy.svg");
    std::fs::write(
        &accuracy_path,
        line_chart(
            "accuracy vs epoch",
            &[
                ("train_acc", "#1f77b4", table.series("train_acc")),
                ("test_acc", "#d62728", table.series("test_acc")),
            ],
        ),
    )?;
    let loss_path = out.join("loss.svg");
    std::fs::write(
        &loss_path,
        line_chart(
            "loss vs epoch",
            &[
                ("train_loss", "#1f77b4", table.series("train_loss")),
                ("val_loss", "#2ca02c", table.series("val_loss")),
                ("test_loss", "#d62728", table.series("test_loss")),
            ],
        ),
    )?;
    println!("wrote {} and {}", accuracy_path.display(), loss_path.display());
    write_manifest(
        out,
        "figures",
        serde_json::json!({"metrics": args.metrics.display().to_string()}),
        0,
        &[&accuracy_path, &loss_path],
    )?;
    Ok(EXIT_OK)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// Minimal SVG line chart: axes, 5 ticks per axis, one polyline per series
/// and a text legend. Output depends only on the inputs; numbers are
/// formatted with fixed precision.
pub fn line_chart(title: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    let points: Vec<(f64, f64)> =
        series.iter().flat_map(|(_, _, s)| s.iter().copied()).collect();
    let (x_min, x_max) = bounds(points.iter().map(|p| p.0));
    let (y_min, y_max) = bounds(points.iter().map(|p| p.1));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_BOTTOM
    ));
    // Ticks and labels.
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x_val = x_min + t * (x_max - x_min);
        let y_val = y_min + t * (y_max - y_min);
        let x = sx(x_val);
        let y = sy(y_val);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_BOTTOM,
            HEIGHT - MARGIN_BOTTOM + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{x_val:.4}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 18.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_LEFT}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{y_val:.4}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
    }
    // Series polylines and legend.
    for (i, (name, color, data)) in series.iter().enumerate() {
        if !data.is_empty() {
            let coords: Vec<String> = data
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                coords.join(" ")
            ));
        }
        let ly = MARGIN_TOP + 14.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"3\" fill=\"{color}\"/>\n",
            WIDTH - MARGIN_RIGHT - 110.0,
            ly - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"monospace\" font-size=\"11\">{name}</text>\n",
            WIDTH - MARGIN_RIGHT - 95.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
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
        // Degenerate span: pad so the scale stays invertible.
        return (min - 0.5, max + 0.5);
    }
    (min, max)
}
