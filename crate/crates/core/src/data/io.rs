//! CSV layout on disk: one sample per row, one feature per column, comma
//! delimited, optional header line. Labels: one 0-based integer per line.
//! In memory the matrix is transposed so that samples are columns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Non-blank lines with their 1-based line numbers; a first line that does
/// not parse as data is treated as a header and dropped.
fn data_lines(text: &str, looks_numeric: impl Fn(&str) -> bool) -> Vec<(usize, &str)> {
    let mut lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if let Some((_, first)) = lines.first() {
        if !looks_numeric(first) {
            lines.remove(0);
        }
    }
    lines
}

fn parse_row(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .enumerate()
        .map(|(col, field)| {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("field {} is not a number: {field:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("field {} is not finite", col + 1)));
            }
            Ok(v)
        })
        .collect()
}

/// Read a sample-per-row CSV into an `features x samples` matrix.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = read(path)?;
    let lines = data_lines(&text, |l| {
        l.split(',').all(|f| f.trim().parse::<f64>().is_ok())
    });
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len());
    for (line, l) in &lines {
        let row = parse_row(path, *line, l)?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    *line,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    // Row j of the file is column j of the matrix, contiguous in memory.
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::from_vec(m, n, flat))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = read(path)?;
    let lines = data_lines(&text, |l| l.parse::<usize>().is_ok());
    lines
        .into_iter()
        .map(|(line, l)| {
            l.parse::<usize>()
                .map_err(|_| parse_err(path, line, format!("label is not a non-negative integer: {l:?}")))
        })
        .collect()
}

pub fn load_dataset(matrix_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let x = load_matrix(matrix_path)?;
    let labels = load_labels(labels_path)?;
    Dataset::new(x, labels)
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn save_matrix(x: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for col in x.column_iter() {
        for (i, v) in col.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(ds: &Dataset, matrix_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    save_matrix(&ds.x, matrix_path)?;
    save_labels(&ds.labels, labels_path)
}
