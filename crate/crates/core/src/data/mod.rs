//! Dataset handling: CSV ingestion, column normalization, seeded stratified
//! splits, synthetic union-of-subspaces data, metrics and PGM export.
//!
//! All randomness comes from [`rng::seeded`]: xoshiro256++ whose 256-bit
//! state is filled from the 64-bit seed by SplitMix64. Nothing here depends
//! on a host-default generator.

mod image;
mod io;
pub mod rng;
mod split;
mod synth;

pub use image::{read_pgm, write_image_pgm, Pgm};
pub use io::{load_dataset, load_labels, load_matrix, save_dataset, save_labels, save_matrix};
pub use split::{stratified_split, Split, SplitSpec};
pub use synth::{synth_subspace_dataset, SynthData, SynthSpec};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Samples as columns of `x`, with 0-based class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    /// `(height, width)` when each column is a flattened row-major image.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                op: "Dataset::new",
                expected: format!("{} labels", x.ncols()),
                found: format!("{} labels", labels.len()),
            });
        }
        Ok(Dataset {
            x,
            labels,
            image_shape: None,
        })
    }

    pub fn with_image_shape(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.x.nrows() {
            return Err(Error::InvalidData(format!(
                "image shape {height}x{width} does not match feature count {}",
                self.x.nrows()
            )));
        }
        self.image_shape = Some((height, width));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Columns `idx` (in the given order) as a new dataset.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select_columns(idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            x,
            labels,
            image_shape: self.image_shape,
        }
    }
}

/// Scale every nonzero column to unit Euclidean norm.
pub fn normalize_columns(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            op: "accuracy",
            expected: format!("{} predictions", truth.len()),
            found: format!("{}", pred.len()),
        });
    }
    if pred.is_empty() {
        return Err(Error::param("pred", "accuracy of an empty prediction set"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}
