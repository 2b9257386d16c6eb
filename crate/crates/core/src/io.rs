//! CSV ingestion and export for returns panels and rate series.
//!
//! Input layout: a header row whose first column is `date`, one column per
//! asset after it; each subsequent row is one period of simple returns in
//! decimal units. Validation failures report 1-based line numbers with the
//! header on line 1.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::ReturnsMatrix;

/// Reads a returns panel from a CSV file. See the module docs for the
/// expected layout.
pub fn read_returns_csv(path: &Path) -> Result<ReturnsMatrix> {
    let file = std::fs::File::open(path)?;
    read_returns(file)
}

/// Reads a returns panel from any reader. The header row is line 1.
pub fn read_returns<R: Read>(reader: R) -> Result<ReturnsMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| Error::Ingest {
        line: 1,
        reason: format!("cannot read header row: {e}"),
    })?;
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::Ingest {
            line: 1,
            reason: format!(
                "first header column must be \"date\", got {:?}",
                headers.get(0).unwrap_or("")
            ),
        });
    }
    let asset_labels: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let p = asset_labels.len();
    if p < 2 {
        return Err(Error::Ingest {
            line: 1,
            reason: format!("need at least 2 asset columns, got {p}"),
        });
    }

    let mut period_index = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Ingest {
            line,
            reason: format!("malformed CSV record: {e}"),
        })?;
        if record.len() != p + 1 {
            return Err(Error::Ingest {
                line,
                reason: format!("expected {} fields, got {}", p + 1, record.len()),
            });
        }
        period_index.push(record[0].to_owned());
        for (j, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Ingest {
                line,
                reason: format!(
                    "column {:?}: cannot parse {:?} as a number",
                    asset_labels[j], field
                ),
            })?;
            if !value.is_finite() {
                return Err(Error::Ingest {
                    line,
                    reason: format!("column {:?}: non-finite return {value}", asset_labels[j]),
                });
            }
            rows.push(value);
        }
    }

    let n = period_index.len();
    if n < 2 {
        return Err(Error::Ingest {
            line: n + 1,
            reason: format!("need at least 2 periods, got {n}"),
        });
    }
    let values = DMatrix::from_row_slice(n, p, &rows);
    // Re-map panel-level validation failures (duplicate labels, unordered
    // dates) onto the offending line for a actionable message.
    match ReturnsMatrix::new(values, asset_labels, period_index) {
        Ok(x) => Ok(x),
        Err(Error::InvalidInput(reason)) => Err(Error::Ingest { line: 1, reason }),
        Err(e) => Err(e),
    }
}

/// Writes a returns panel in the same layout that [`read_returns_csv`]
/// ingests.
pub fn write_returns_csv(path: &Path, x: &ReturnsMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_returns(file, x)
}

/// Writes a returns panel to any writer.
pub fn write_returns<W: Write>(writer: W, x: &ReturnsMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_owned()];
    header.extend(x.asset_labels().iter().cloned());
    wtr.write_record(&header)?;
    for t in 0..x.n_periods() {
        let mut record = vec![x.period_index()[t].clone()];
        for j in 0..x.n_assets() {
            record.push(format!("{:.12e}", x.values()[(t, j)]));
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a per-period rate series (`date,rate` with a header row). Used for
/// excess-return adjustment of a returns panel.
pub fn read_rate_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let file = std::fs::File::open(path)?;
    read_rates(file)
}

/// Reads a rate series from any reader.
pub fn read_rates<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Ingest {
        line: 1,
        reason: format!("cannot read header row: {e}"),
    })?;
    if headers.len() != 2 || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::Ingest {
            line: 1,
            reason: "rate series must have exactly the columns date,rate".into(),
        });
    }
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Ingest {
            line,
            reason: format!("malformed CSV record: {e}"),
        })?;
        let rate: f64 = record[1].trim().parse().map_err(|_| Error::Ingest {
            line,
            reason: format!("cannot parse {:?} as a rate", &record[1]),
        })?;
        if !rate.is_finite() {
            return Err(Error::Ingest {
                line,
                reason: format!("non-finite rate {rate}"),
            });
        }
        out.push((record[0].to_owned(), rate));
    }
    Ok(out)
}

/// Subtracts a per-period rate from every asset's return, producing excess
/// returns. The rate series must cover exactly the panel's periods, in the
/// same order.
pub fn subtract_rate(x: &ReturnsMatrix, rates: &[(String, f64)]) -> Result<ReturnsMatrix> {
    if rates.len() != x.n_periods() {
        return Err(Error::InvalidInput(format!(
            "rate series has {} periods but the panel has {}",
            rates.len(),
            x.n_periods()
        )));
    }
    for (t, (date, _)) in rates.iter().enumerate() {
        if date != &x.period_index()[t] {
            return Err(Error::InvalidInput(format!(
                "rate series date {:?} does not match panel date {:?} at period {t}",
                date,
                x.period_index()[t]
            )));
        }
    }
    let mut values = x.values().clone();
    for t in 0..x.n_periods() {
        for j in 0..x.n_assets() {
            values[(t, j)] -= rates[t].1;
        }
    }
    ReturnsMatrix::new(values, x.asset_labels().to_vec(), x.period_index().to_vec())
}
