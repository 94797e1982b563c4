//! CSV ingestion and emission.
//!
//! Header row holds coordinate names, each following row is one time step.
//! An empty cell or `NaN` (any case) is a missing value; emission writes
//! missing values as empty cells.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ts::TimeSeries;

pub fn read_series<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if names.is_empty() {
        return Err(Error::invalid("csv header has no columns"));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::invalid(format!(
                        "row {}, column {}: cannot parse {cell:?}",
                        row + 1,
                        j + 1
                    ))
                })?
            };
            columns[j].push(v);
        }
    }
    TimeSeries::from_columns(names, columns)
}

pub fn write_series<W: Write>(ts: &TimeSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ts.names())?;
    let mut row = Vec::with_capacity(ts.d());
    for i in 0..ts.n() {
        row.clear();
        for j in 0..ts.d() {
            row.push(ts.get(i, j).map(|v| v.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_series(path: impl AsRef<Path>) -> Result<TimeSeries> {
    read_series(File::open(path)?)
}

pub fn save_series(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    write_series(ts, File::create(path)?)
}
