//! JSON and CSV report files.

use std::path::Path;

use dphd::io::write_atomic;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub kind: String,
    pub data: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &str, data: T) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.to_string(),
            data,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }
}

impl<T: DeserializeOwned> Report<T> {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let report: Self = serde_json::from_str(text).map_err(|e| CliError::Data(format!("report: {e}")))?;
        if report.schema_version > REPORT_SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "report schema {} is newer than supported {REPORT_SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// A header plus string cells; numbers are formatted before insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Shortest round-trip representation, or empty for a missing value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
