//! CSV helpers shared by the export functions.

use std::path::Path;

use crate::error::Result;

/// Formats a float with 17 significant digits so it re-parses exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_columns(path: &Path, headers: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt17(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| crate::Error::InvalidArgument(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
