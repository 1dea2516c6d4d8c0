//! End-to-end classifier: decomposition, two-matrix regression, low-rank
//! projection for unseen samples, and nearest-neighbour matching.
//!
//! Test sample `x_t` is embedded as `W1 P x_t + W2 L x_t` and assigned the
//! class of the nearest reference column.

use std::fmt;
use std::str::FromStr;

use crate::data::{accuracy, normalize_columns};
use crate::dtml::{dtml_fit_observed, fit_ablation, AblationMode, DtmlModel, FitOptions};
use crate::error::{Error, Result};
use crate::latlrr::{latlrr_fit, principal_features, salient_features, LatLrrModel, SolverOptions};
use crate::linalg::Matrix;
use crate::projector::{project, solve_projection, ProjectionMatrix};

/// Maps external class ids to dense indices `0..c`, ascending by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCodebook {
    ids: Vec<usize>,
}

impl LabelCodebook {
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut ids = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        Self::from_ids(ids)
    }

    /// From an explicit id list (must be strictly ascending).
    pub fn from_ids(ids: Vec<usize>) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::InvalidData(format!(
                "at least 2 classes are required, found {}",
                ids.len()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData("class ids must be strictly ascending".into()));
        }
        Ok(LabelCodebook { ids })
    }

    pub fn class_count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn id_of(&self, index: usize) -> Option<usize> {
        self.ids.get(index).copied()
    }

    pub fn encode(&self, labels: &[usize]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&l| {
                self.index_of(l)
                    .ok_or_else(|| Error::InvalidData(format!("label {l} is not in the codebook")))
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.ids[i]).collect()
    }
}

/// `c x n` one-hot label matrix.
pub fn one_hot(labels: &[usize], c: usize) -> Result<Matrix> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidData(format!("label {bad} out of range for {c} classes")));
    }
    Ok(Matrix::from_fn(c, labels.len(), |i, j| if labels[j] == i { 1.0 } else { 0.0 }))
}

/// What nearest-neighbour matching compares test embeddings against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NnTarget {
    /// Embedded training samples.
    #[default]
    Gallery,
    /// The one-hot label vertices.
    Labels,
}

impl fmt::Display for NnTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NnTarget::Gallery => "gallery",
            NnTarget::Labels => "labels",
        })
    }
}

impl FromStr for NnTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gallery" => Ok(NnTarget::Gallery),
            "labels" => Ok(NnTarget::Labels),
            other => Err(Error::param("nn_target", format!("unknown target {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Penalty on `W1`; also the single penalty of the shared-single mode.
    pub lambda3: f64,
    /// Penalty on `W2`; also the single penalty of the salient-only mode.
    pub lambda4: f64,
    pub mode: AblationMode,
    pub nn_target: NnTarget,
    /// Scale every sample to unit norm before decomposition.
    pub normalize: bool,
    /// Rank cut-off for the pseudo-inverse in the projection; `None` = default.
    pub rank_tol: Option<f64>,
    pub solver: SolverOptions,
    pub fit: FitOptions,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lambda1: 1.0,
            lambda2: 5.0,
            lambda3: 10.0,
            lambda4: 1.0,
            mode: AblationMode::Full,
            nn_target: NnTarget::Gallery,
            normalize: true,
            rank_tol: None,
            solver: SolverOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        self.solver.validate()?;
        self.fit.validate()
    }
}

/// The parts needed at test time.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub projection: ProjectionMatrix,
    /// `m x m` row-space code from the decomposition.
    pub l: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    /// `c x n` embedded training samples.
    pub gallery: Matrix,
    /// Codebook index of each gallery column.
    pub gallery_labels: Vec<usize>,
    pub codebook: LabelCodebook,
    pub normalize: bool,
    pub nn_target: NnTarget,
}

impl Classifier {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        let c = self.codebook.class_count();
        let checks = [
            ("projection", self.projection.p.shape(), (m, m)),
            ("l", self.l.shape(), (m, m)),
            ("w1", self.w1.shape(), (c, m)),
            ("w2", self.w2.shape(), (c, m)),
            ("gallery", self.gallery.shape(), (c, self.gallery_labels.len())),
        ];
        for (op, found, expected) in checks {
            if found != expected {
                return Err(Error::DimensionMismatch {
                    op: "Classifier::validate",
                    expected: format!("{op} {}x{}", expected.0, expected.1),
                    found: format!("{}x{}", found.0, found.1),
                });
            }
        }
        if self.gallery_labels.iter().any(|&l| l >= c) {
            return Err(Error::InvalidData("gallery label outside the codebook".into()));
        }
        Ok(())
    }

    /// `W1 P s + W2 L s` for every column `s` of `samples`.
    pub fn embed(&self, samples: &Matrix) -> Result<Matrix> {
        if samples.nrows() != self.dim() {
            return Err(Error::shape("embed", (self.dim(), samples.ncols()), samples.shape()));
        }
        let s = if self.normalize {
            normalize_columns(samples)
        } else {
            samples.clone()
        };
        let principal = project(&self.projection, &s)?;
        Ok(&self.w1 * principal + &self.w2 * (&self.l * &s))
    }

    /// Codebook index of the nearest reference column for every sample.
    pub fn predict(&self, samples: &Matrix) -> Result<Vec<usize>> {
        let emb = self.embed(samples)?;
        Ok(match self.nn_target {
            NnTarget::Gallery => nearest_labels(&emb, &self.gallery, &self.gallery_labels, false),
            NnTarget::Labels => nearest_vertex(&emb),
        })
    }

    /// Predictions decoded back to external class ids.
    pub fn predict_ids(&self, samples: &Matrix) -> Result<Vec<usize>> {
        Ok(self.codebook.decode(&self.predict(samples)?))
    }
}

/// Euclidean nearest reference column, ties to the lowest column index.
/// `skip_self` excludes column `j` of `reference` when matching query `j`.
fn nearest_labels(queries: &Matrix, reference: &Matrix, labels: &[usize], skip_self: bool) -> Vec<usize> {
    queries
        .column_iter()
        .enumerate()
        .map(|(q, col)| {
            let mut best = (f64::INFINITY, 0usize);
            for (j, r) in reference.column_iter().enumerate() {
                if skip_self && j == q {
                    continue;
                }
                let d = (col - r).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            labels[best.1]
        })
        .collect()
}

/// Nearest one-hot vertex `e_k`: minimizes `||v - e_k||^2 = ||v||^2 - 2 v_k + 1`,
/// so the largest coordinate wins (lowest index on ties).
fn nearest_vertex(queries: &Matrix) -> Vec<usize> {
    queries
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for (k, v) in col.iter().enumerate() {
                if *v > col[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Objective and training accuracy after one sweep of the weight fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub objective: f64,
    /// Leave-one-out gallery accuracy (or label-vertex accuracy) on the
    /// training set with the weights of this sweep.
    pub train_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub latlrr: LatLrrModel,
    pub dtml: DtmlModel,
    pub classifier: Classifier,
    pub params: TrainParams,
    pub trace: Vec<SweepRecord>,
}

impl TrainedModel {
    pub fn projection(&self) -> &ProjectionMatrix {
        &self.classifier.projection
    }

    pub fn codebook(&self) -> &LabelCodebook {
        &self.classifier.codebook
    }

    pub fn gallery(&self) -> &Matrix {
        &self.classifier.gallery
    }

    pub fn embed(&self, samples: &Matrix) -> Result<Matrix> {
        self.classifier.embed(samples)
    }

    pub fn predict(&self, samples: &Matrix) -> Result<Vec<usize>> {
        self.classifier.predict(samples)
    }
}

/// The decomposition-side products of training, reusable across weight fits
/// with different `lambda3`, `lambda4` or mode.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Training data after optional normalization.
    pub x: Matrix,
    pub latlrr: LatLrrModel,
    pub principal: Matrix,
    pub salient: Matrix,
    pub projection: ProjectionMatrix,
    pub normalized: bool,
}

/// Decompose training data and fit the projection for unseen samples.
pub fn decompose(x: &Matrix, params: &TrainParams) -> Result<Decomposition> {
    params.validate()?;
    let x = if params.normalize {
        normalize_columns(x)
    } else {
        x.clone()
    };
    let latlrr = latlrr_fit(&x, params.lambda1, params.lambda2, &params.solver)?;
    let principal = principal_features(&latlrr, &x)?;
    let salient = salient_features(&latlrr, &x)?;
    let projection = solve_projection(&x, &principal, params.rank_tol)?;
    Ok(Decomposition {
        x,
        latlrr,
        principal,
        salient,
        projection,
        normalized: params.normalize,
    })
}

/// Train the full classifier. `labels` are external class ids.
pub fn train(x: &Matrix, labels: &[usize], params: &TrainParams) -> Result<TrainedModel> {
    if x.ncols() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "train",
            expected: format!("{} labels", x.ncols()),
            found: format!("{}", labels.len()),
        });
    }
    LabelCodebook::from_labels(labels)?;
    params.validate()?;
    let dec = decompose(x, params)?;
    train_on(&dec, labels, params)
}

/// Fit weights on an existing decomposition (the `lambda1`, `lambda2`,
/// `normalize`, `rank_tol` and solver fields of `params` are not used).
pub fn train_on(dec: &Decomposition, labels: &[usize], params: &TrainParams) -> Result<TrainedModel> {
    if dec.x.ncols() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "train_on",
            expected: format!("{} labels", dec.x.ncols()),
            found: format!("{}", labels.len()),
        });
    }
    let codebook = LabelCodebook::from_labels(labels)?;
    let encoded = codebook.encode(labels)?;
    let y = one_hot(&encoded, codebook.class_count())?;
    let (a, b) = (&dec.principal, &dec.salient);

    let score = |w1: &Matrix, w2: &Matrix| -> f64 {
        let emb = w1 * a + w2 * b;
        let pred = match params.nn_target {
            NnTarget::Gallery if emb.ncols() > 1 => nearest_labels(&emb, &emb, &encoded, true),
            _ => nearest_vertex(&emb),
        };
        accuracy(&pred, &encoded).unwrap_or(0.0)
    };

    let mut trace = Vec::new();
    let dtml = match params.mode {
        AblationMode::Full => {
            let zero = Matrix::zeros(y.nrows(), a.nrows());
            let mut records = vec![];
            let model = dtml_fit_observed(a, b, &y, params.lambda3, params.lambda4, &params.fit, |s| {
                records.push(SweepRecord {
                    sweep: s.index,
                    objective: s.objective,
                    train_accuracy: score(s.w1, s.w2),
                });
            })?;
            trace.push(SweepRecord {
                sweep: 0,
                objective: model.objective_trace[0],
                train_accuracy: score(&zero, &zero),
            });
            trace.extend(records);
            model
        }
        AblationMode::SalientOnly | AblationMode::SharedSingle => {
            let lambda = if params.mode == AblationMode::SalientOnly {
                params.lambda4
            } else {
                params.lambda3
            };
            let model = fit_ablation(params.mode, a, b, &y, lambda)?;
            let zero = Matrix::zeros(y.nrows(), a.nrows());
            trace.push(SweepRecord {
                sweep: 0,
                objective: model.objective_trace[0],
                train_accuracy: score(&zero, &zero),
            });
            trace.push(SweepRecord {
                sweep: 1,
                objective: model.objective_trace[1],
                train_accuracy: score(&model.w1, &model.w2),
            });
            model
        }
    };

    // Reference embeddings go through the same path as test samples, so a
    // training sample presented at test time lands exactly on its column.
    let gallery = &dtml.w1 * project(&dec.projection, &dec.x)? + &dtml.w2 * b;
    let classifier = Classifier {
        projection: dec.projection.clone(),
        l: dec.latlrr.l.clone(),
        w1: dtml.w1.clone(),
        w2: dtml.w2.clone(),
        gallery,
        gallery_labels: encoded,
        codebook,
        normalize: dec.normalized,
        nn_target: params.nn_target,
    };
    Ok(TrainedModel {
        latlrr: dec.latlrr.clone(),
        dtml,
        classifier,
        params: *params,
        trace,
    })
}
