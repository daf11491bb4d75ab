//! Peak and loss-budget tables (CSV with `#` comment lines).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::optics::LossRow;
use crate::spectral::LorentzianPeak;
use crate::units::{RateConvention, NM};

pub const PEAK_COLUMNS: [&str; 3] = ["center_nm", "fwhm_THz", "area"];
pub const LOSS_COLUMNS: [&str; 4] = ["lambda_nm", "t_plane_ppm", "t_fiber_ppm", "absorption_ppm"];

fn data_err(name: &str, msg: impl Into<String>) -> Error {
    Error::Data {
        path: name.into(),
        msg: msg.into(),
    }
}

/// Parses CSV text with a fixed header into rows of finite numbers.
pub(crate) fn numeric_rows(text: &str, name: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(name, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != columns {
        return Err(data_err(
            name,
            format!("expected columns {:?}, found {:?}", columns, header),
        ));
    }
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(name, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(columns.len());
        for (field, col) in rec.iter().zip(columns) {
            let v: f64 = field
                .parse()
                .map_err(|_| data_err(name, format!("line {line}: column {col}: cannot parse {field:?}")))?;
            row.push(v);
        }
        if row.iter().any(|v| !v.is_finite()) {
            bad.push(line);
        } else {
            rows.push(row);
        }
    }
    if !bad.is_empty() {
        return Err(data_err(name, format!("non-finite values on lines {bad:?}")));
    }
    Ok(rows)
}

/// Peak table with header `center_nm,fwhm_THz,area`; widths are quoted in `units`.
pub fn parse_peak_table(text: &str, name: &str, units: RateConvention) -> Result<Vec<LorentzianPeak>> {
    let rows = numeric_rows(text, name, &PEAK_COLUMNS)?;
    if rows.is_empty() {
        return Err(data_err(name, "peak table has no rows"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = LorentzianPeak::from_wavelength(r[0] * NM, units.thz(r[1]), r[2]);
            if p.is_valid() {
                Ok(p)
            } else {
                Err(data_err(
                    name,
                    format!("row {}: peak needs positive center, width and area", i + 1),
                ))
            }
        })
        .collect()
}

pub fn format_peak_table(peaks: &[LorentzianPeak], units: RateConvention) -> String {
    let mut s = PEAK_COLUMNS.join(",");
    s.push('\n');
    for p in peaks {
        let _ = writeln!(
            s,
            "{},{},{}",
            crate::io::output::fmt_f64(p.center_wavelength() / NM),
            crate::io::output::fmt_f64(units.from_angular(p.linewidth()) / 1e12),
            crate::io::output::fmt_f64(p.area)
        );
    }
    s
}

/// Loss table with header `lambda_nm,t_plane_ppm,t_fiber_ppm,absorption_ppm`.
pub fn parse_loss_table(text: &str, name: &str) -> Result<Vec<LossRow>> {
    let rows = numeric_rows(text, name, &LOSS_COLUMNS)?;
    if rows.is_empty() {
        return Err(data_err(name, "loss table has no rows"));
    }
    Ok(rows
        .iter()
        .map(|r| LossRow {
            wavelength: r[0] * NM,
            t_plane: r[1] * 1e-6,
            t_fiber: r[2] * 1e-6,
            absorption: r[3] * 1e-6,
        })
        .collect())
}
