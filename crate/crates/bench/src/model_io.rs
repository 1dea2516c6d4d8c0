//! JSON persistence of a trained classifier.

use std::path::Path;

use dtml_core::linalg::Matrix;
use dtml_core::pipeline::{Classifier, LabelCodebook};
use dtml_core::projector::ProjectionMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::experiment::write_file;

pub const FORMAT: &str = "dtml-model/1";

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Column-major.
    data: Vec<f64>,
}

impl From<&Matrix> for MatrixJson {
    fn from(m: &Matrix) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatrixJson {
    fn into_matrix(self, name: &str) -> std::result::Result<Matrix, String> {
        if self.rows * self.cols != self.data.len() {
            return Err(format!(
                "{name}: {}x{} needs {} entries, found {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            ));
        }
        Ok(Matrix::from_vec(self.rows, self.cols, self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format: String,
    class_ids: Vec<usize>,
    normalize: bool,
    nn_target: String,
    projection: MatrixJson,
    projection_residual: f64,
    l: MatrixJson,
    w1: MatrixJson,
    w2: MatrixJson,
    gallery: MatrixJson,
    gallery_labels: Vec<usize>,
}

pub fn model_json(clf: &Classifier) -> String {
    let saved = SavedModel {
        format: FORMAT.into(),
        class_ids: clf.codebook.ids().to_vec(),
        normalize: clf.normalize,
        nn_target: clf.nn_target.to_string(),
        projection: (&clf.projection.p).into(),
        projection_residual: clf.projection.fit_residual,
        l: (&clf.l).into(),
        w1: (&clf.w1).into(),
        w2: (&clf.w2).into(),
        gallery: (&clf.gallery).into(),
        gallery_labels: clf.gallery_labels.clone(),
    };
    serde_json::to_string(&saved).expect("model serializes")
}

pub fn parse_model(text: &str) -> std::result::Result<Classifier, String> {
    let s: SavedModel = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if s.format != FORMAT {
        return Err(format!("unsupported format {:?}, expected {FORMAT:?}", s.format));
    }
    let clf = Classifier {
        projection: ProjectionMatrix {
            p: s.projection.into_matrix("projection")?,
            fit_residual: s.projection_residual,
        },
        l: s.l.into_matrix("l")?,
        w1: s.w1.into_matrix("w1")?,
        w2: s.w2.into_matrix("w2")?,
        gallery: s.gallery.into_matrix("gallery")?,
        gallery_labels: s.gallery_labels,
        codebook: LabelCodebook::from_ids(s.class_ids).map_err(|e| e.to_string())?,
        normalize: s.normalize,
        nn_target: s.nn_target.parse().map_err(|e: dtml_core::Error| e.to_string())?,
    };
    clf.validate().map_err(|e| e.to_string())?;
    Ok(clf)
}

pub fn save_model(clf: &Classifier, path: &Path) -> Result<()> {
    write_file(path, &model_json(clf))
}

pub fn load_model(path: &Path) -> Result<Classifier> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_model(&text).map_err(|reason| BenchError::Model {
        path: path.to_path_buf(),
        reason,
    })
}
