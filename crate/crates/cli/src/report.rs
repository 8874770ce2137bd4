//! Result tables: our runs next to published baselines, plus a CSV twin.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use forgetnet_core::eval::{delta_metric, Delta, EvalReport};

use crate::baselines::Baseline;

/// One printed cell group: a model's numbers for one task, or a Δ row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub task: usize,
    pub a_y: Option<f64>,
    pub a_s: Option<f64>,
    pub a_s_optimal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<TableRow>,
    pub text: String,
    pub csv: String,
}

const CSV_HEADER: &str = "model,task,a_y,a_s,a_s_optimal";

fn delta_value(d: Delta) -> Option<f64> {
    d.value()
}

/// Builds the table. With `delta_over` naming a baseline method, a Δ row
/// compares our numbers to that method's, task by task.
pub fn report_table(reports: &[EvalReport], baselines: &[Baseline], delta_over: Option<&str>) -> Result<ReportTable> {
    if reports.is_empty() {
        bail!("report_table needs at least one report");
    }
    let tasks = reports.iter().map(|r| r.task).max().unwrap_or(0) + 1;
    let mut rows = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for b in baselines {
        if !methods.contains(&b.method) {
            methods.push(b.method);
        }
    }
    for m in &methods {
        for b in baselines.iter().filter(|b| b.method == *m) {
            rows.push(TableRow {
                model: b.method.to_string(),
                task: b.task,
                a_y: Some(b.a_y),
                a_s: b.a_s,
                a_s_optimal: None,
            });
        }
    }
    for r in reports {
        rows.push(TableRow {
            model: "Ours".into(),
            task: r.task,
            a_y: Some(r.a_y),
            a_s: Some(r.a_s),
            a_s_optimal: Some(r.a_s_optimal),
        });
    }
    if let Some(name) = delta_over {
        let label = format!("Δ over {name}");
        for r in reports {
            let Some(b) = baselines.iter().find(|b| b.method == name && b.task == r.task) else {
                continue;
            };
            // Baselines are scored against our run's optimal A_s.
            let reference = EvalReport::reference(b.a_y, b.a_s.unwrap_or(r.a_s_optimal), r.a_s_optimal);
            let (dy, ds) = delta_metric(r, &reference)?;
            rows.push(TableRow {
                model: label.clone(),
                task: r.task,
                a_y: delta_value(dy),
                a_s: b.a_s.and(delta_value(ds)),
                a_s_optimal: None,
            });
        }
    }
    Ok(ReportTable {
        text: render_text(&rows, tasks),
        csv: render_csv(&rows),
        rows,
    })
}

fn render_text(rows: &[TableRow], tasks: usize) -> String {
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut header = vec!["Model".to_string()];
    for t in 0..tasks {
        let suffix = if tasks > 1 { format!(" #{}", t + 1) } else { String::new() };
        header.push(format!("A_y{suffix}"));
        header.push(format!("A_s{suffix}"));
    }
    let mut grid = vec![header];
    for m in &models {
        let is_delta = m.starts_with('Δ');
        let mut line = vec![m.to_string()];
        for t in 0..tasks {
            let row = rows.iter().find(|r| r.model == *m && r.task == t);
            for v in [row.and_then(|r| r.a_y), row.and_then(|r| r.a_s)] {
                line.push(match (v, is_delta) {
                    (None, _) => "–".to_string(),
                    (Some(x), true) => format!("{:.1}%", x * 100.0),
                    (Some(x), false) => format!("{x:.3}"),
                });
            }
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, line) in grid.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.model,
            r.task,
            cell(r.a_y),
            cell(r.a_s),
            cell(r.a_s_optimal)
        );
    }
    out
}

/// Reads a CSV twin back into rows.
pub fn parse_report_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        bail!("report CSV: unexpected header");
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(s.parse().with_context(|| format!("report CSV: bad number `{s}`"))?))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                bail!("report CSV: expected 5 fields in `{l}`");
            }
            Ok(TableRow {
                model: f[0].to_string(),
                task: f[1].parse().context("report CSV: bad task")?,
                a_y: opt(f[2])?,
                a_s: opt(f[3])?,
                a_s_optimal: opt(f[4])?,
            })
        })
        .collect()
}
