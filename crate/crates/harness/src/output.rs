use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

/// One CSV file: a fixed header and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().context("flushing csv")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Shortest round-tripping decimal, with an exponent for very large or
/// small magnitudes.
pub fn num(v: f64) -> String {
    match serde_json::Number::from_f64(v) {
        Some(n) => n.to_string(),
        None => format!("{v}"),
    }
}

/// Empty cell for a value that does not apply.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    summary: &'a serde_json::Value,
}

/// Writes `<table>.csv` for every table and `<experiment>.json` holding the
/// config and summary. Returns the written paths.
pub fn write_run(dir: &Path, config: &ExperimentConfig, run: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for table in &run.tables {
        let path = dir.join(format!("{}.csv", table.name));
        std::fs::write(&path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join(format!("{}.json", run.experiment.name()));
    let file = SummaryFile {
        experiment: run.experiment.name(),
        config,
        summary: &run.summary,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_empty_cells() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![num(0.5), opt(None)]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n0.5,\n");
        assert_eq!(t.column("a"), Some(vec!["0.5"]));
        assert_eq!(num(4.5e-33), "4.5e-33");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(f64::NAN), "NaN");
    }
}
