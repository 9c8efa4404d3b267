//! Column tables written as CSV or JSON.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use envelofit::io::{write_json, write_rows_csv};
use envelofit::{Result, Signal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

pub enum Column {
    Real(Vec<f64>),
    Index(Vec<u64>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Index(v) => v.len(),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::Real(v) => v[i].to_string(),
            Column::Index(v) => v[i].to_string(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Column::Real(v) => Value::from(v.clone()),
            Column::Index(v) => Value::from(v.clone()),
        }
    }
}

/// Named, equal-length columns. CSV output is one row per index; JSON
/// output is one array per column name.
#[derive(Default)]
pub struct Table {
    columns: Vec<(String, Column)>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn real(mut self, name: &str, values: Vec<f64>) -> Self {
        self.columns.push((name.to_string(), Column::Real(values)));
        self
    }

    pub fn index(mut self, name: &str, values: Vec<u64>) -> Self {
        self.columns.push((name.to_string(), Column::Index(values)));
        self
    }

    pub fn signal(s: &Signal) -> Self {
        Self::new().real("t", s.times().collect()).real("value", s.samples().to_vec())
    }

    /// Writes `<dir>/<stem>.<csv|json>` and returns the path.
    pub fn write(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        match format {
            OutputFormat::Csv => {
                let rows = self.columns.first().map_or(0, |(_, c)| c.len());
                let header: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
                let body: Vec<Vec<String>> = (0..rows)
                    .map(|i| self.columns.iter().map(|(_, c)| c.cell(i)).collect())
                    .collect();
                write_rows_csv(&path, &header, &body)?;
            }
            OutputFormat::Json => {
                let obj: Map<String, Value> = self.columns.iter().map(|(n, c)| (n.clone(), c.to_json())).collect();
                write_json(&path, &Value::Object(obj))?;
            }
        }
        Ok(path)
    }
}
