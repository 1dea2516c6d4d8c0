use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `column` as an 8-bit binary PGM (P5, maxval 255).
///
/// Pixels are read row-major (`column[r * width + c]`) and min-max scaled to
/// `0..=255`; a constant image becomes all 128.
pub fn write_image_pgm(column: &[f64], shape: (usize, usize), path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = shape;
    if h * w != column.len() || column.is_empty() {
        return Err(Error::InvalidData(format!(
            "image shape {h}x{w} does not match {} values",
            column.len()
        )));
    }
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(quantize(column));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn quantize(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Read a binary P5 file with maxval 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        reason: reason.to_string(),
    };

    // Header: four whitespace-separated tokens, then one whitespace byte.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let pixels = bytes.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != width * height {
        return Err(bad("pixel count does not match header"));
    }
    Ok(Pgm { width, height, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn scaling_examples() {
        assert_eq!(quantize(&[0.0, 1.0, 2.0, 3.0]), vec![0, 85, 170, 255]);
        assert_eq!(quantize(&[4.2; 6]), vec![128; 6]);
    }

    #[test]
    fn header_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let col: Vec<f64> = (0..12).map(f64::from).collect();
        write_image_pgm(&col, (3, 4), &p).unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!((img.height, img.width), (3, 4));
        assert_eq!(img.pixels.first(), Some(&0));
        assert_eq!(img.pixels.last(), Some(&255));
        assert!(write_image_pgm(&col, (5, 4), &p).is_err());
    }
}
