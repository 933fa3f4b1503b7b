//! CSV emission. Floats carry 12 significant digits in scientific notation
//! so files diff cleanly across platforms; integers and flags are plain.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// 12 significant digits, e.g. `3.71600000000e-2`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.11e}")
}

/// A header plus string cells, written as one CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    /// Writes the table; with `timestamp` the first line is a
    /// `# generated_unix=<seconds>` comment.
    pub fn write<W: Write>(&self, mut out: W, timestamp: bool) -> Result<(), CliError> {
        if timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(out, "# generated_unix={secs}").map_err(CliError::Write)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(CliError::Write)
    }

    pub fn to_csv_string(&self, timestamp: bool) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, timestamp).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Write(io),
        other => CliError::Write(std::io::Error::other(format!("{other:?}"))),
    }
}
