//! Deterministic CSV and JSON writers.
//!
//! Floats are written with 9 significant digits, "," delimited, "\n"
//! terminated; JSON objects have sorted keys.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::invalid(format!("unknown output format {s:?} (csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// Float with 9 significant digits in exponent notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{:.8e}", v)
    }
}

/// `v` rounded to 9 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v.is_finite() {
        fmt_f64(v).parse().unwrap_or(v)
    } else {
        v
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => fmt_f64(*f),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(f) if f.is_finite() => Value::from(round_sig(*f)),
            Cell::Float(_) => Value::Null,
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Bool(b) => Value::from(*b),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            _ => None,
        }
    }
}

/// A result table: named columns, one row per grid point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r[j].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Array of row objects.
    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    Value::Object(
                        self.columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.clone(), v.json()))
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => json_string(&self.to_json_value()),
        }
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .map(|f| Value::from(round_sig(f)))
            .unwrap_or(Value::Number(n)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Serializes `report` with floats rounded to 9 significant digits and keys sorted.
pub fn to_json<T: Serialize + ?Sized>(report: &T) -> Result<String> {
    let v = serde_json::to_value(report).map_err(|e| Error::invalid(format!("cannot serialize report: {e}")))?;
    // serde_json's default map is ordered by key.
    Ok(json_string(&round_value(v)))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a table; an empty table yields a header-only CSV and a warning.
pub fn write_table(table: &Table, path: &Path, format: OutputFormat) -> Result<()> {
    if table.is_empty() {
        log::warn!("{}: table is empty", path.display());
    }
    write_file(path, &table.render(format))
}

pub fn write_json<T: Serialize + ?Sized>(report: &T, path: &Path) -> Result<()> {
    write_file(path, &to_json(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["n", "x", "label"]);
        t.push(vec![9usize.into(), 1.0f64.into(), "a".into()]);
        t.push(vec![10usize.into(), (1.0f64 / 3.0).into(), "b,c".into()]);
        t
    }

    #[test]
    fn csv_is_stable_and_precise() {
        let t = sample();
        let s = t.to_csv();
        assert_eq!(s, "n,x,label\n9,1.00000000e0,a\n10,3.33333333e-1,\"b,c\"\n");
        assert_eq!(s, sample().to_csv());
        let back: f64 = "3.33333333e-1".parse().unwrap();
        assert!((back * 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: f64,
        }
        let s = to_json(&R {
            zeta: 2.0 / 3.0,
            alpha: 1.0,
        })
        .unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("0.666666667"));
    }

    #[test]
    fn empty_table_has_header_only() {
        let t = Table::new(["a", "b"]);
        assert_eq!(t.to_csv(), "a,b\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_table(&t, &p, OutputFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "a,b\n");
    }

    proptest::proptest! {
        #[test]
        fn written_tables_read_back(xs in proptest::collection::vec(-1e30f64..1e30, 1..20), e in -250i32..250) {
            let mut t = Table::new(["x", "y"]);
            for &x in &xs {
                t.push(vec![x.into(), (x * 10f64.powi(e)).into()]);
            }
            let back = crate::io::tables::numeric_rows(&t.to_csv(), "t.csv", &["x", "y"]).unwrap();
            for (row, &x) in back.iter().zip(&xs) {
                for (got, want) in row.iter().zip([x, x * 10f64.powi(e)]) {
                    if want != 0.0 && want.is_finite() {
                        proptest::prop_assert!((got / want - 1.0).abs() <= 1e-8, "{} vs {}", got, want);
                    }
                }
            }
        }
    }

    #[test]
    fn format_parses() {
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
