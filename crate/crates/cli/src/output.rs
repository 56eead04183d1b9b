//! CSV emission and the `t,y` data-file reader.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! parsing a written value gives back the identical `f64`.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Shortest decimal string that parses back to exactly `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Column name for the value of the path at time `t`, e.g. `x_t37`.
pub fn trace_column(t: f64) -> String {
    format!("x_t{t}")
}

/// A CSV file being written, with its path kept for error messages.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = Self {
            writer: csv::Writer::from_writer(file),
            path,
        };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::io(&self.path, e.into()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reads a `t,y` CSV file; the header must be exactly `t,y`.
pub fn read_data(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |reason: String| CliError::Data {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "y"] {
        return Err(bad(format!(
            "header must be `t,y`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            let field = &record[i];
            field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: `{field}` is not a finite number", row + 1)))
        };
        t.push(parse(0)?);
        y.push(parse(1)?);
    }
    if t.is_empty() {
        return Err(bad("no observations".into()));
    }
    Ok((t, y))
}
