//! Tables, run status, and the CSV/JSON writers.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{:e}", v + 0.0),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<Option<i64>> for Cell {
    fn from(v: Option<i64>) -> Self {
        v.map_or(Cell::Empty, Cell::Int)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    /// Numeric values of a column, `None` for blank cells.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        let Some(j) = self.column(name) else { return Vec::new() };
        self.rows.iter().map(|r| r[j].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

/// Outcome of the cross-checks of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Status {
    pub failures: Vec<String>,
    pub unsupported: Vec<String>,
}

impl Status {
    pub fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    pub fn unsupported(&mut self, msg: String) {
        self.unsupported.push(msg);
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.unsupported.is_empty()
    }

    /// `0` all checks pass, `2` a cross-check failed, `4` unsupported regime.
    pub fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            2
        } else if !self.unsupported.is_empty() {
            4
        } else {
            0
        }
    }
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub tables: Vec<Table>,
    pub config: ExperimentConfig,
    /// Derived quantities worth recording, e.g. the probed sign convention.
    pub derived: Value,
    pub status: Status,
    pub runtime_seconds: f64,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metadata(&self) -> Value {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "derived": self.derived,
            "tables": self.tables.iter().map(|t| json!({"name": t.name, "columns": t.header, "rows": t.rows.len()})).collect::<Vec<_>>(),
            "status": {
                "exit_code": self.status.exit_code(),
                "failures": self.status.failures,
                "unsupported": self.status.unsupported,
            },
            "runtime_seconds": self.runtime_seconds,
            "timestamp_unix": timestamp,
        })
    }

    /// Writes `<table>.csv` per table and `<command>.json`; returns the paths.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        if self.config.output.formats.contains(&Format::Csv) {
            for t in &self.tables {
                let p = dir.join(format!("{}.csv", t.name));
                std::fs::write(&p, t.to_csv()).map_err(io(&p))?;
                written.push(p);
            }
        }
        if self.config.output.formats.contains(&Format::Json) {
            let p = dir.join(format!("{}.json", self.command.replace('-', "_")));
            let text = serde_json::to_string_pretty(&self.metadata()).expect("metadata serializes");
            std::fs::write(&p, text).map_err(io(&p))?;
            written.push(p);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering_is_exact_and_blank_for_missing() {
        let mut t = Table::new("t", vec!["a", "b", "c"]);
        t.push(vec![0.1.into(), Cell::Empty, "ok".into()]);
        t.push(vec![std::f64::consts::PI.into(), 3i64.into(), "fail: x, y".into()]);
        let text = t.to_csv();
        assert_eq!(text.lines().next(), Some("a,b,c"));
        assert!(text.contains("1e-1,,ok"));
        assert!(text.contains("\"fail: x, y\""));
        let pi: f64 = text.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(pi, std::f64::consts::PI);
    }

    #[test]
    fn exit_codes_follow_precedence() {
        let mut s = Status::default();
        assert_eq!(s.exit_code(), 0);
        s.unsupported("x".into());
        assert_eq!(s.exit_code(), 4);
        s.fail("y".into());
        assert_eq!(s.exit_code(), 2);
    }
}
