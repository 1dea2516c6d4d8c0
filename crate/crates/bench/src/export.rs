//! Per-sample image export of the decomposition `x = XZ + LX + E`.

use std::path::{Path, PathBuf};

use dtml_core::data::{write_image_pgm, Dataset};
use dtml_core::pipeline::{decompose, TrainParams};

use crate::error::{BenchError, Result};

/// Image parts written for every sample, in file order.
pub const PARTS: [&str; 4] = ["original", "principal", "salient", "noise"];

pub fn part_path(dir: &Path, index: usize, part: &str) -> PathBuf {
    dir.join(format!("sample_{index:04}_{part}.pgm"))
}

/// Decomposes the whole dataset with `params.lambda1`, `params.lambda2` and
/// writes four PGMs per requested sample. "original" is the sample as the
/// solver saw it (after normalization when enabled).
pub fn export_decomposition(ds: &Dataset, params: &TrainParams, indices: &[usize], dir: &Path) -> Result<Vec<PathBuf>> {
    let shape = ds.image_shape.ok_or_else(|| {
        dtml_core::Error::InvalidData("decompose needs an image shape (--image-shape HxW)".into())
    })?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(BenchError::usage(format!(
            "sample index {bad} out of range for {} samples",
            ds.len()
        )));
    }
    let dec = decompose(&ds.x, params)?;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;

    let mut written = Vec::with_capacity(4 * indices.len());
    for &i in indices {
        let cols = [
            dec.x.column(i),
            dec.principal.column(i),
            dec.salient.column(i),
            dec.latlrr.e.column(i),
        ];
        for (part, col) in PARTS.iter().zip(cols) {
            let path = part_path(dir, i, part);
            write_image_pgm(col.as_slice(), shape, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
