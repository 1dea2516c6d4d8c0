//! Two-stage parameter search.
//!
//! Stage 1 scans `(lambda1, lambda2)` with the configured `lambda3, lambda4`;
//! stage 2 fixes the best pair and scans `(lambda3, lambda4)`, reusing one
//! decomposition per repeat. Scores are validation accuracies on a holdout
//! carved out of each repeat's training split; the test split is never read.

use std::fmt::Write as _;

use dtml_core::data::{accuracy, stratified_split, Dataset, SplitSpec};
use dtml_core::pipeline::{decompose, train_on, Decomposition, TrainParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result, Stage};
use crate::experiment::repeat_seed;

const CANDIDATES: [&str; 17] = [
    "1e-5", "5e-5", "1e-4", "5e-4", "1e-3", "5e-3", "1e-2", "5e-2", "1e-1", "5e-1", "1", "5", "1e1", "5e1", "1e2",
    "5e2", "1e3",
];

/// `{1e-5, 5e-5, 1e-4, ..., 5e2, 1e3}`: mantissas 1 and 5 over ten decades.
pub fn default_candidate_set() -> Vec<f64> {
    CANDIDATES.iter().map(|s| s.parse().expect("literal parses")).collect()
}

/// Holdout share of each class's training samples (at least one).
pub const HOLDOUT_FRACTION: f64 = 0.2;

pub fn holdout_per_class(train_per_class: usize) -> usize {
    ((train_per_class as f64 * HOLDOUT_FRACTION).floor() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub first: f64,
    pub second: f64,
    /// Mean validation accuracy over the grid repeats.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub stage1_score: f64,
    pub stage2_score: f64,
    /// `(lambda1, lambda2)` surface, first parameter outer.
    pub stage1: Vec<GridPoint>,
    /// `(lambda3, lambda4)` surface, first parameter outer.
    pub stage2: Vec<GridPoint>,
}

struct Fold {
    fit: Dataset,
    val: Dataset,
}

fn folds(config: &ExperimentConfig, ds: &Dataset, repeats: usize) -> Result<Vec<Fold>> {
    let k = config.train_per_class;
    let hold = holdout_per_class(k);
    if k <= hold {
        return Err(BenchError::usage(format!(
            "grid search needs train_per_class >= 2 to hold out validation samples, got {k}"
        )));
    }
    (0..repeats)
        .map(|r| {
            let wrap = |source| BenchError::Repeat {
                repeat: r,
                stage: Stage::Split,
                source,
            };
            let seed = repeat_seed(config.seed_base, r);
            let outer = stratified_split(&ds.labels, &SplitSpec { train_per_class: k, seed }).map_err(wrap)?;
            let train = ds.select(&outer.train);
            let inner = stratified_split(
                &train.labels,
                &SplitSpec {
                    train_per_class: k - hold,
                    seed,
                },
            )
            .map_err(wrap)?;
            Ok(Fold {
                fit: train.select(&inner.train),
                val: train.select(&inner.test),
            })
        })
        .collect()
}

fn score(dec: &Decomposition, fold: &Fold, params: &TrainParams, repeat: usize) -> Result<f64> {
    let wrap = |stage| move |source| BenchError::Repeat { repeat, stage, source };
    let model = train_on(dec, &fold.fit.labels, params).map_err(wrap(Stage::Train))?;
    let pred = model.classifier.predict_ids(&fold.val.x).map_err(wrap(Stage::Predict))?;
    accuracy(&pred, &fold.val.labels).map_err(wrap(Stage::Predict))
}

fn pairs(grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect()
}

/// First point with the highest score; NaN never wins.
fn best(points: &[GridPoint]) -> GridPoint {
    let mut best = points[0];
    for p in &points[1..] {
        if p.score > best.score || (best.score.is_nan() && !p.score.is_nan()) {
            best = *p;
        }
    }
    best
}

pub fn grid_search(config: &ExperimentConfig, ds: &Dataset, grid: &[f64], repeats: usize) -> Result<GridResult> {
    config.validate()?;
    if grid.is_empty() {
        return Err(BenchError::usage("grid must not be empty"));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(BenchError::usage(format!("grid values must be finite and > 0, got {bad}")));
    }
    if repeats < 1 {
        return Err(BenchError::usage("grid repeats must be >= 1"));
    }
    let folds = folds(config, ds, repeats)?;
    let base = config.train_params();
    let n = folds.len() as f64;

    let stage1 = pairs(grid)
        .into_par_iter()
        .map(|(l1, l2)| {
            let p = TrainParams {
                lambda1: l1,
                lambda2: l2,
                ..base
            };
            let mut total = 0.0;
            for (r, fold) in folds.iter().enumerate() {
                let dec = decompose(&fold.fit.x, &p).map_err(|source| BenchError::Repeat {
                    repeat: r,
                    stage: Stage::Decompose,
                    source,
                })?;
                total += score(&dec, fold, &p, r)?;
            }
            Ok(GridPoint {
                first: l1,
                second: l2,
                score: total / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let b1 = best(&stage1);

    let tuned = TrainParams {
        lambda1: b1.first,
        lambda2: b1.second,
        ..base
    };
    let decs = folds
        .iter()
        .enumerate()
        .map(|(r, fold)| {
            decompose(&fold.fit.x, &tuned).map_err(|source| BenchError::Repeat {
                repeat: r,
                stage: Stage::Decompose,
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stage2 = pairs(grid)
        .into_par_iter()
        .map(|(l3, l4)| {
            let p = TrainParams {
                lambda3: l3,
                lambda4: l4,
                ..tuned
            };
            let mut total = 0.0;
            for (r, (dec, fold)) in decs.iter().zip(&folds).enumerate() {
                total += score(dec, fold, &p, r)?;
            }
            Ok(GridPoint {
                first: l3,
                second: l4,
                score: total / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let b2 = best(&stage2);

    Ok(GridResult {
        lambda1: b1.first,
        lambda2: b1.second,
        lambda3: b2.first,
        lambda4: b2.second,
        stage1_score: b1.score,
        stage2_score: b2.score,
        stage1,
        stage2,
    })
}

pub fn surface_csv(names: (&str, &str), points: &[GridPoint]) -> String {
    let mut out = format!("{},{},score\n", names.0, names.1);
    for p in points {
        writeln!(out, "{},{},{}", p.first, p.second, p.score).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SynthSettings;

    #[test]
    fn candidate_set_pattern() {
        let c = default_candidate_set();
        assert_eq!(c.len(), 17);
        assert_eq!(c[0], 1e-5);
        assert_eq!(c[16], 1e3);
        for (i, v) in c.iter().enumerate() {
            let decade = 10f64.powi(i as i32 / 2 - 5);
            let mantissa = if i % 2 == 0 { 1.0 } else { 5.0 };
            assert!((v - mantissa * decade).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn holdout_sizes() {
        assert_eq!(holdout_per_class(2), 1);
        assert_eq!(holdout_per_class(5), 1);
        assert_eq!(holdout_per_class(10), 2);
        assert_eq!(holdout_per_class(12), 2);
    }

    #[test]
    fn ties_go_to_first() {
        let pts = [
            GridPoint { first: 1.0, second: 1.0, score: f64::NAN },
            GridPoint { first: 1.0, second: 2.0, score: 0.5 },
            GridPoint { first: 2.0, second: 1.0, score: 0.5 },
        ];
        assert_eq!(best(&pts).second, 2.0);
    }

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            synth: Some(SynthSettings {
                classes: 3,
                subspace_dim: 2,
                ambient_dim: 12,
                per_class: 8,
                ..SynthSettings::default()
            }),
            train_per_class: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_point_grid_returns_it() {
        let c = cfg();
        let ds = c.load_dataset().unwrap();
        let res = grid_search(&c, &ds, &[0.5], 1).unwrap();
        assert_eq!((res.lambda1, res.lambda2, res.lambda3, res.lambda4), (0.5, 0.5, 0.5, 0.5));
        assert_eq!(res.stage1.len(), 1);
        assert_eq!(res.stage2.len(), 1);
    }

    #[test]
    fn best_dominates_surface() {
        let c = cfg();
        let ds = c.load_dataset().unwrap();
        let res = grid_search(&c, &ds, &[1e-2, 1.0, 1e2], 2).unwrap();
        assert_eq!(res.stage2.len(), 9);
        assert!(res.stage2.iter().all(|p| p.score <= res.stage2_score));
        assert!(res.stage1.iter().all(|p| p.score <= res.stage1_score));
        let csv = surface_csv(("lambda3", "lambda4"), &res.stage2);
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("lambda3,lambda4,score\n0.01,0.01,"));
    }

    #[test]
    fn rejects_bad_grids() {
        let c = cfg();
        let ds = c.load_dataset().unwrap();
        assert!(grid_search(&c, &ds, &[], 1).is_err());
        assert!(grid_search(&c, &ds, &[1.0, -1.0], 1).is_err());
        let one = ExperimentConfig { train_per_class: 1, ..c };
        assert!(grid_search(&one, &ds, &[1.0], 1).is_err());
    }
}
