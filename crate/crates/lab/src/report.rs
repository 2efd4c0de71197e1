//! Report documents and CSV side tables.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub values: Value,
    /// `null` for exact checks.
    pub tolerance: Option<f64>,
}

impl Check {
    pub fn exact(name: impl Into<String>, ok: bool, values: Value) -> Self {
        Check {
            name: name.into(),
            status: Status::from_bool(ok),
            values,
            tolerance: None,
        }
    }

    pub fn within(name: impl Into<String>, ok: bool, values: Value, tolerance: f64) -> Self {
        Check {
            tolerance: Some(tolerance),
            ..Check::exact(name, ok, values)
        }
    }
}

/// A CSV table written next to the report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Table {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// What an experiment hands back to the runner.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config: Value,
    pub status: Status,
    pub checks: Vec<Check>,
    /// CSV files written next to the report, in emission order.
    pub tables: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, config: Value, outcome: &Outcome) -> Self {
        let ok = outcome.checks.iter().all(|c| c.status == Status::Pass);
        Report {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config,
            status: Status::from_bool(ok),
            checks: outcome.checks.clone(),
            tables: outcome.tables.iter().map(|t| t.file.clone()).collect(),
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are plain JSON");
        s.push('\n');
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `report.json` and every side table into `dir`; returns the report path.
pub fn emit_report(report: &Report, tables: &[Table], dir: &Path) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for t in tables {
        let path = dir.join(&t.file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(&t.header).map_err(|e| csv_err(&path, e))?;
        for row in &t.rows {
            w.write_record(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(io_err(&path))?;
    Ok(path)
}

fn csv_err(path: &Path, e: csv::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn one_failed_check_fails_the_report() {
        let mut o = Outcome::default();
        o.check(Check::exact("a", true, json!({})));
        o.check(Check::within("b", false, json!({"x": 1}), 0.05));
        let r = Report::new("demo", json!({}), &o);
        assert_eq!(r.status, Status::Fail);
        assert_eq!(r.failed_checks().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["b"]);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["status"], "fail");
        assert_eq!(v["checks"][1]["tolerance"], 0.05);
        assert_eq!(v["checks"][0]["tolerance"], Value::Null);
    }

    #[test]
    fn tables_are_written_with_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("defects.csv", &["n", "size"]);
        t.push(vec!["8".into(), "8".into()]);
        let mut o = Outcome::default();
        o.table(t.clone());
        let r = Report::new("demo", json!({}), &o);
        emit_report(&r, &[t], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("defects.csv")).unwrap();
        assert_eq!(text, "n,size\n8,8\n");
        assert!(dir.path().join("report.json").exists());
    }
}
