//! CSV readers and writers for the three dataset shapes.
//!
//! Every format is a plain numeric grid: rows of an `n × q` sample, a single
//! column for a series, or `q` rows of `q` values for a lattice field. A
//! leading header row is skipped when its first field is not a number.
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use pairsp_core::model::{Dataset, LatticeField, RowSample};
use thiserror::Error;

use crate::config::ModelKind;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("invalid dataset: {0}")]
    Shape(String),
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

/// Parsed numeric grid with the 1-based file line of each row.
struct Grid {
    rows: Vec<Vec<f64>>,
    lines: Vec<u64>,
}

fn parse_grid<R: Read>(reader: R) -> Result<Grid, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            IoError::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(k as u64 + 1);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if k == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            // header row
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Parse {
                line,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(IoError::Parse {
                    line,
                    column: c + 1,
                    message: "missing or non-finite value".into(),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(IoError::Parse {
                    line,
                    column: row.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(IoError::Shape("file holds no data rows".into()));
    }
    Ok(Grid { rows, lines })
}

/// Reads a dataset in the layout used by `kind`.
pub fn read_dataset<R: Read>(reader: R, kind: ModelKind) -> Result<Dataset, IoError> {
    let grid = parse_grid(reader)?;
    let n = grid.rows.len();
    let q = grid.rows[0].len();
    let shape = |e: pairsp_core::Error| IoError::Shape(e.to_string());
    match kind {
        ModelKind::Mvn => {
            let values = grid.rows.into_iter().flatten().collect();
            Ok(Dataset::Rows(RowSample::new(n, q, values).map_err(shape)?))
        }
        ModelKind::Ar1 => {
            if q != 1 {
                return Err(IoError::Parse {
                    line: grid.lines[0],
                    column: 2,
                    message: format!("a series has one column, found {q}"),
                });
            }
            Ok(Dataset::Series(grid.rows.into_iter().map(|r| r[0]).collect()))
        }
        ModelKind::Geostat => {
            if n != q {
                return Err(IoError::Shape(format!("lattice must be square, found {n} rows of {q}")));
            }
            let values = grid.rows.into_iter().flatten().collect();
            Ok(Dataset::Lattice(LatticeField::new(q, values).map_err(shape)?))
        }
    }
}

pub fn load_dataset(path: &Path, kind: ModelKind) -> Result<Dataset, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, kind)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(mut out: W, data: &Dataset) -> Result<(), IoError> {
    let mut line = |vals: &[f64]| -> std::io::Result<()> {
        let fields: Vec<String> = vals.iter().map(|v| fmt17(*v)).collect();
        writeln!(out, "{}", fields.join(","))
    };
    match data {
        Dataset::Rows(rows) => {
            for i in 0..rows.n() {
                line(rows.row(i))?;
            }
        }
        Dataset::Series(s) => {
            for v in s {
                line(std::slice::from_ref(v))?;
            }
        }
        Dataset::Lattice(f) => {
            for row in f.values().chunks(f.side()) {
                line(row)?;
            }
        }
    }
    Ok(())
}

pub fn store_dataset(path: &Path, data: &Dataset) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, data)?;
    w.flush()?;
    Ok(())
}
