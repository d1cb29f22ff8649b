//! Report assembly and serialization.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// One table cell. Floats print in Rust's shortest round-trip form, which
/// keeps CSV output byte-stable for a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v:e}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Text(String::new()), Into::into)
    }
}

/// Where the numbers in a column come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Grid coordinate or configuration echo.
    Input,
    /// Exact state-vector amplitudes.
    Exact,
    /// Finite-shot estimates without gate noise.
    Shots,
    /// Finite-shot estimates with bit-flip noise.
    Noisy,
    /// Closed-form or classical reference value.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub provenance: Provenance,
}

pub fn col(name: &str, unit: &str, provenance: Provenance) -> Column {
    Column { name: name.into(), unit: unit.into(), provenance }
}

/// A CSV-shaped table whose first column is the swept variable and whose
/// last column, `status`, is `ok` or the failure reason for that row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub file: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: &str, mut columns: Vec<Column>) -> Self {
        columns.push(col("status", "", Provenance::Derived));
        Table { file: file.into(), columns, rows: Vec::new() }
    }

    /// Appends a row; `values` must cover every column except `status`.
    pub fn push(&mut self, mut values: Vec<Cell>, status: std::result::Result<(), String>) {
        assert_eq!(values.len() + 1, self.columns.len(), "row width for {}", self.file);
        values.push(Cell::Text(status.err().unwrap_or_else(|| "ok".into())));
        self.rows.push(values);
    }

    /// Failed row: the input coordinates, blanks, then the reason.
    pub fn push_failure(&mut self, inputs: Vec<Cell>, reason: String) {
        let mut values = inputs;
        values.resize(self.columns.len() - 1, Cell::Text(String::new()));
        self.push(values, Err(reason));
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub label: String,
    pub prefactor: f64,
    pub exponent: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub status: String,
    pub qubits: Option<usize>,
    pub p_succ_total: Option<f64>,
    pub mse_classical: Option<f64>,
    pub mse_analytical: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub tables: Vec<Table>,
    pub fits: Vec<FitSummary>,
    /// Raw CSV bodies that do not fit the table shape, such as trajectories.
    pub attachments: Vec<(String, String)>,
    pub failures: usize,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    /// Writes `report.json` and, when `csv` is set, one file per table.
    pub fn write(&self, dir: &Path, csv: bool) -> CliResult<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        if csv {
            for t in &self.tables {
                write_file(&dir.join(&t.file), &t.to_csv()?)?;
                written.push(t.file.clone());
            }
            for (name, body) in &self.attachments {
                write_file(&dir.join(name), body)?;
                written.push(name.clone());
            }
        }
        write_file(&dir.join("report.json"), &serde_json::to_string_pretty(self)?)?;
        written.push("report.json".into());
        Ok(written)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Plain-text overview for the terminal.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:?} with {} ({} runs, {} failed, {:.2}s)\n",
            self.config.kind,
            self.config.method,
            self.runs.len(),
            self.failures,
            self.wall_seconds
        );
        for t in &self.tables {
            s += &format!("  {}: {} rows\n", t.file, t.rows.len());
        }
        for f in &self.fits {
            s += &format!("  fit {}: {:.4e} * x^{:.4}\n", f.label, f.prefactor, f.exponent);
        }
        for r in self.runs.iter().filter(|r| r.status != "ok") {
            s += &format!("  failed {}: {}\n", r.label, r.status);
        }
        s
    }
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_status_and_failure_rows() {
        let mut t = Table::new("x.csv", vec![col("eps", "", Provenance::Input), col("mse", "u^2", Provenance::Exact)]);
        t.push(vec![0.1.into(), 2.5e-3.into()], Ok(()));
        t.push_failure(vec![0.0.into()], "bad, very bad".into());
        let csv = t.to_csv().unwrap();
        assert_eq!(csv, "eps,mse,status\n1e-1,2.5e-3,ok\n0e0,,\"bad, very bad\"\n");
    }

    #[test]
    fn cells_round_trip_through_json() {
        let cells = vec![Cell::Int(3), Cell::Num(0.5), Cell::Text("ok".into())];
        let back: Vec<Cell> = serde_json::from_str(&serde_json::to_string(&cells).unwrap()).unwrap();
        assert_eq!(back, cells);
    }
}
