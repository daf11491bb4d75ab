//! Numeric CSV series with a fixed header.

use std::path::Path;

use crate::error::{Error, Result};

/// Expected column names, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema(pub &'static [&'static str]);

impl Schema {
    pub const SPECTRUM: Schema = Schema(&["wavelength_nm", "counts"]);
    pub const G2: Schema = Schema(&["delay_ns", "g2"]);
}

/// Parses CSV text; every row must be finite, offending rows are listed.
pub fn parse_csv_series(text: &str, name: &str, schema: Schema) -> Result<Vec<Vec<f64>>> {
    super::tables::numeric_rows(text, name, schema.0)
}

pub fn load_csv_series(path: &Path, schema: Schema) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_series(&text, &path.display().to_string(), schema)
}

/// Two-column series as (x, y) pairs.
pub fn pairs(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r[0], r[1])).collect()
}
