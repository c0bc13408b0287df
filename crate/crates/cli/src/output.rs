//! Rendering and atomic file output.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(qrng_core::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// CSV with an explicit header so an empty table still has one.
pub fn csv_table<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let to_core = |e: csv::Error| CliError::Core(qrng_core::Error::from(e));
    w.write_record(header).map_err(to_core)?;
    for row in rows {
        w.serialize(row).map_err(to_core)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.into_error()))
}

/// Writes `path` through a temporary file in the same directory, so readers
/// see either the old file or the complete new one.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if path.as_os_str().is_empty() {
        return Err(CliError::Output(io::Error::new(
            io::ErrorKind::InvalidInput,
            "output path is empty",
        )));
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Sends rendered output to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, |w| {
            w.write_all(bytes).map_err(|e| CliError::io(path, e))
        }),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes).map_err(CliError::Output)?;
            stdout.flush().map_err(CliError::Output)
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}
