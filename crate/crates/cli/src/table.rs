//! Space-delimited numeric tables with a one-line column header, used
//! by the diagnostics exports and per-episode evaluation dumps.

use std::path::Path;

use crate::error::{Result, RunError};

pub fn table_to_string(columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&columns.join(" "));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len(), "row width mismatch");
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v:?}"));
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, table_to_string(columns, rows)).map_err(RunError::io(path))
}
