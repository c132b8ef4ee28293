//! Plain numeric CSV input: one observation per row, optional header line.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use faer::{Col, Mat};

use crate::error::{Error, Result};

/// Parses a numeric matrix. Every row must have the same number of fields.
pub fn parse_matrix<R: Read>(reader: R, header: bool, what: &str) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1 + header as usize;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{what}: line {line}, field {}: '{f}' is not a number", j + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Dimension(format!(
                    "{what}: line {line} has {} fields but earlier rows have {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{what}: no data rows")));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(Mat::from_fn(n, p, |i, j| rows[i][j]))
}

/// Parses a single-column response.
pub fn parse_response<R: Read>(reader: R, header: bool, what: &str) -> Result<Col<f64>> {
    let m = parse_matrix(reader, header, what)?;
    if m.ncols() != 1 {
        return Err(Error::Dimension(format!("{what}: response must have 1 column, found {}", m.ncols())));
    }
    Ok(Col::from_fn(m.nrows(), |i| m[(i, 0)]))
}

pub fn read_matrix(path: &Path, header: bool) -> Result<Mat<f64>> {
    parse_matrix(File::open(path)?, header, &path.display().to_string())
}

pub fn read_response(path: &Path, header: bool) -> Result<Col<f64>> {
    parse_response(File::open(path)?, header, &path.display().to_string())
}
