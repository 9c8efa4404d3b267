//! CSV and JSON file helpers.
//!
//! Signals are stored as two columns with header `t,value`. Floats are
//! written with Rust's shortest round-trip formatting, so a signal written
//! and read back is bitwise identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Allowed relative deviation of any time step from the median step.
pub const MAX_TIME_JITTER: f64 = 1e-6;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Reads a `t,value` CSV. The sample rate is inferred from the median time
/// step unless `fs_override` is given; the time column must be uniform
/// either way.
pub fn read_signal_csv(path: &Path, fs_override: Option<f64>) -> Result<Signal> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| format_err(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(format_err(path, "expected header `t,value`"));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e))?;
        let parse = |col: usize| -> Result<f64> {
            record[col]
                .parse::<f64>()
                .map_err(|e| format_err(path, format!("row {}: {e}", line + 2)))
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    if values.is_empty() {
        return Err(Error::EmptySignal);
    }

    let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let median_step = if steps.is_empty() {
        None
    } else {
        let mut sorted = steps.clone();
        sorted.sort_by(f64::total_cmp);
        Some(sorted[sorted.len() / 2])
    };
    if let Some(dt) = median_step {
        if dt.is_nan() || dt <= 0.0 {
            return Err(format_err(path, "time column must be increasing"));
        }
        if let Some(i) = steps.iter().position(|s| ((s - dt) / dt).abs() > MAX_TIME_JITTER) {
            return Err(format_err(
                path,
                format!("non-uniform sampling at row {} (step {} vs median {dt})", i + 3, steps[i]),
            ));
        }
    }
    let fs = match (fs_override, median_step) {
        (Some(fs), _) => fs,
        (None, Some(dt)) => 1.0 / dt,
        (None, None) => return Err(format_err(path, "cannot infer the sample rate from a single row")),
    };
    Signal::with_start(values, fs, times[0])
}

pub fn write_signal_csv(path: &Path, signal: &Signal) -> Result<()> {
    let times: Vec<f64> = signal.times().collect();
    write_columns_csv(path, &["t", "value"], &[&times, signal.samples()])
}

/// Writes equal-length columns under the given header.
pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::length("csv column", rows, bad.len()));
    }
    let mut out = Vec::new();
    for i in 0..rows {
        let mut row = Vec::with_capacity(columns.len());
        for c in columns {
            row.push(c[i].to_string());
        }
        out.push(row);
    }
    write_rows_csv(path, header, &out)
}

/// Writes pre-formatted rows under the given header.
pub fn write_rows_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| format_err(path, e);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| format_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| format_err(path, e))
}
