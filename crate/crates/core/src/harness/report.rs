use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::search::{select, SelectionStrategy, Trial};
use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for one value.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Target accuracy of one selected trial, as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trial: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub per_seed: Vec<f64>,
}

impl Summary {
    pub fn from_values(trial: usize, per_seed: Vec<f64>) -> Self {
        Summary {
            trial,
            mean: mean(&per_seed),
            std: sample_std(&per_seed),
            n: per_seed.len(),
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub row: String,
    pub column: String,
    pub summary: Option<Summary>,
    pub error: Option<String>,
    /// Every trial of the search behind this cell.
    pub trials: Vec<Trial>,
}

impl Cell {
    /// Selects among `trials`; a cell without a completed trial is failed.
    pub fn from_trials(
        row: String,
        column: String,
        trials: Vec<Trial>,
        strategy: SelectionStrategy,
    ) -> Self {
        match select(&trials, strategy) {
            Some(i) => Cell {
                row,
                column,
                summary: Some(Summary::from_values(
                    trials[i].index,
                    trials[i].target_accuracies(),
                )),
                error: None,
                trials,
            },
            None => {
                let error = trials
                    .iter()
                    .find_map(|t| t.error.clone())
                    .unwrap_or_else(|| "no completed trial".into());
                Cell::failed(row, column, error, trials)
            }
        }
    }

    pub fn failed(row: String, column: String, error: String, trials: Vec<Trial>) -> Self {
        Cell {
            row,
            column,
            summary: None,
            error: Some(error),
            trials,
        }
    }
}

/// A rows × columns grid of selected target accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub selection: SelectionStrategy,
    pub column_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub cells: Vec<Cell>,
}

impl Report {
    pub fn cell(&self, row: &str, column: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.row == row && c.column == column)
    }

    pub fn mean(&self, row: &str, column: &str) -> Option<f64> {
        self.cell(row, column)?.summary.as_ref().map(|s| s.mean)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.summary.is_none()).count()
    }

    /// The same searches under another selection strategy.
    pub fn reselect(&self, strategy: SelectionStrategy) -> Report {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                if c.trials.is_empty() {
                    c.clone()
                } else {
                    Cell::from_trials(c.row.clone(), c.column.clone(), c.trials.clone(), strategy)
                }
            })
            .collect();
        Report {
            selection: strategy,
            cells,
            ..self.clone()
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Markdown table of `mean ± std` in percent, best mean per column in bold.
pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", report.title);
    let _ = writeln!(
        out,
        "Selection: {}. Target accuracy (%), mean ± sample std over seeds.\n",
        report.selection.label()
    );
    let _ = write!(out, "| {} |", report.column_header);
    for c in &report.columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(report.columns.len()));
    out.push('\n');
    let best: Vec<Option<String>> = report
        .columns
        .iter()
        .map(|col| {
            report
                .cells
                .iter()
                .filter(|c| &c.column == col)
                .filter_map(|c| c.summary.as_ref().map(|s| s.mean))
                .fold(None, |acc: Option<f64>, m| {
                    Some(acc.map_or(m, |a| a.max(m)))
                })
                .map(pct)
        })
        .collect();
    for row in &report.rows {
        let _ = write!(out, "| {row} |");
        for (col, best) in report.columns.iter().zip(&best) {
            let text = match report.cell(row, col) {
                Some(Cell {
                    summary: Some(s), ..
                }) => {
                    let m = pct(s.mean);
                    let body = format!("{m} ± {}", pct(s.std));
                    if best.as_deref() == Some(m.as_str()) {
                        format!("**{body}**")
                    } else {
                        body
                    }
                }
                Some(_) => "failed".to_string(),
                None => "-".to_string(),
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }
    out
}

/// One line of the long-format CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub row: String,
    pub column: String,
    pub selection: SelectionStrategy,
    pub trial: Option<usize>,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Per-seed target accuracies joined by `;`.
    pub per_seed: String,
    pub error: Option<String>,
}

impl CsvRow {
    pub fn per_seed_values(&self) -> Result<Vec<f64>> {
        if self.per_seed.is_empty() {
            return Ok(vec![]);
        }
        self.per_seed
            .split(';')
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::Config(format!("bad per-seed value `{v}`: {e}")))
            })
            .collect()
    }
}

fn csv_rows(report: &Report) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for r in &report.rows {
        for c in &report.columns {
            let Some(cell) = report.cell(r, c) else {
                continue;
            };
            let s = cell.summary.as_ref();
            rows.push(CsvRow {
                row: r.clone(),
                column: c.clone(),
                selection: report.selection,
                trial: s.map(|s| s.trial),
                n: s.map_or(0, |s| s.n),
                mean: s.map(|s| s.mean),
                std: s.map(|s| s.std),
                per_seed: s
                    .map(|s| {
                        s.per_seed
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default(),
                error: cell.error.clone(),
            });
        }
    }
    rows
}

/// Long-format CSV with shortest round-trip floats.
pub fn render_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in csv_rows(report) {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv utf-8: {e}")))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub csv: PathBuf,
    pub json: PathBuf,
    pub raw: Vec<PathBuf>,
}

fn slug(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    out.trim_matches('_').to_string()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `results.md`, `results.csv`, `report.json` and one
/// `raw/<row>__<column>.json` per cell holding every trial and seed.
pub fn emit_report(report: &Report, dir: &Path) -> Result<ReportFiles> {
    let raw_dir = dir.join("raw");
    std::fs::create_dir_all(&raw_dir).map_err(|e| Error::io(&raw_dir, e))?;
    let markdown = dir.join("results.md");
    write(&markdown, &render_markdown(report))?;
    let csv = dir.join("results.csv");
    write(&csv, &render_csv(report)?)?;
    let json = dir.join("report.json");
    write(&json, &serde_json::to_string_pretty(report)?)?;
    let mut raw = Vec::with_capacity(report.cells.len());
    for cell in &report.cells {
        let p = raw_dir.join(format!("{}__{}.json", slug(&cell.row), slug(&cell.column)));
        write(&p, &serde_json::to_string_pretty(cell)?)?;
        raw.push(p);
    }
    Ok(ReportFiles {
        markdown,
        csv,
        json,
        raw,
    })
}
