//! Plain-text matrix files: comma separated, row major, no header, one
//! matrix row per line. Floats are written in shortest round-trip form.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Matrix, Result, Vector};

pub fn read_matrix<R: Read>(reader: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {f:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix file is empty".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<Matrix> {
    read_matrix(std::fs::File::open(path)?)
}

pub fn write_matrix<W: Write>(writer: W, m: &Matrix) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|v| format_float(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, m)
}

/// Vectors are stored as a single line.
pub fn write_vector<W: Write>(writer: W, v: &Vector) -> Result<()> {
    write_matrix(writer, &Matrix::from_row_slice(1, v.len(), v.as_slice()))
}

pub fn read_vector<R: Read>(reader: R) -> Result<Vector> {
    let m = read_matrix(reader)?;
    if m.nrows() != 1 {
        return Err(Error::Parse(format!(
            "expected a single line, found {} rows",
            m.nrows()
        )));
    }
    Ok(Vector::from_iterator(m.ncols(), m.iter().copied()))
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
