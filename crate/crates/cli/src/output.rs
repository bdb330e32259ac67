//! Deterministic file output: '.' decimal separator, 17 significant digits,
//! and the resolved configuration embedded in every file (a `# config`
//! comment line in CSVs, a `config` field in JSON).

use crate::CliError;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// 17 significant digits, locale-independent.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create<C: Serialize>(path: &Path, config: &C, header: &str) -> Result<Self, CliError> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        let config_json =
            serde_json::to_string(config).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(out, "# config: {config_json}")?;
        writeln!(out, "{header}")?;
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
