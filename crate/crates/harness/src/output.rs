use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

pub const DEFAULT_OUT: &str = "out";

/// Creates the output directory, defaulting to `./out`.
pub fn prepare(dir: Option<&Path>) -> Result<PathBuf> {
    let dir = dir.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    Ok(dir)
}

/// Writes a CSV file with a fixed header, quoting fields where needed.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Empty for `None`.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn shifts_label(shifts: &[i64]) -> String {
    let inner: Vec<String> = shifts.iter().map(i64::to_string).collect();
    format!("{{{}}}", inner.join(","))
}
