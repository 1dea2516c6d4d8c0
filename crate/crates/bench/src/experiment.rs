//! Repeated-split experiments and the three-way ablation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use dtml_core::data::{accuracy, stratified_split, Dataset, SplitSpec};
use dtml_core::dtml::AblationMode;
use dtml_core::pipeline::{decompose, train_on, SweepRecord, TrainParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result, Stage};

pub const REPORT_HEADER: &str = "repeat,seed,train_per_class,mode,accuracy,iters_latlrr,sweeps_dtml,objective_final";
pub const CONVERGENCE_HEADER: &str = "repeat,sweep,objective,train_accuracy";

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub train_per_class: usize,
    pub mode: AblationMode,
    pub accuracy: f64,
    pub iters_latlrr: usize,
    pub sweeps_dtml: usize,
    pub objective_final: f64,
    pub trace: Vec<SweepRecord>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub mode: AblationMode,
    /// In repeat order.
    pub repeats: Vec<RepeatResult>,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for one repeat).
    pub std: f64,
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.repeats.iter().map(|r| r.accuracy).collect()
    }

    fn new(config: &ExperimentConfig, mode: AblationMode, repeats: Vec<RepeatResult>, wall: f64) -> Self {
        let acc: Vec<f64> = repeats.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&acc);
        ExperimentReport {
            config: config.clone(),
            mode,
            repeats,
            mean,
            std,
            wall_time_secs: wall,
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `seed_base + r` with wrap-around.
pub fn repeat_seed(seed_base: u64, repeat: usize) -> u64 {
    seed_base.wrapping_add(repeat as u64)
}

/// One repeat: split, decompose the training part once, then fit and score
/// every requested mode on that decomposition.
fn run_repeat(
    ds: &Dataset,
    config: &ExperimentConfig,
    params: &TrainParams,
    repeat: usize,
    modes: &[AblationMode],
) -> Result<Vec<RepeatResult>> {
    let wrap = |stage| move |source| BenchError::Repeat { repeat, stage, source };
    let seed = repeat_seed(config.seed_base, repeat);
    let split = stratified_split(
        &ds.labels,
        &SplitSpec {
            train_per_class: config.train_per_class,
            seed,
        },
    )
    .map_err(wrap(Stage::Split))?;
    let train = ds.select(&split.train);
    let test = ds.select(&split.test);
    let dec = decompose(&train.x, params).map_err(wrap(Stage::Decompose))?;

    modes
        .iter()
        .map(|&mode| {
            let p = TrainParams { mode, ..*params };
            let model = train_on(&dec, &train.labels, &p).map_err(wrap(Stage::Train))?;
            let pred = model.classifier.predict_ids(&test.x).map_err(wrap(Stage::Predict))?;
            let acc = accuracy(&pred, &test.labels).map_err(wrap(Stage::Predict))?;
            Ok(RepeatResult {
                repeat,
                seed,
                train_per_class: config.train_per_class,
                mode,
                accuracy: acc,
                iters_latlrr: model.latlrr.iterations(),
                sweeps_dtml: model.dtml.sweeps(),
                objective_final: model.dtml.final_objective(),
                trace: model.trace,
                train_idx: split.train.clone(),
                test_idx: split.test.clone(),
            })
        })
        .collect()
}

/// Runs every repeat (concurrently) for each mode; one report per mode, in
/// the order of `modes`.
pub fn run_modes(config: &ExperimentConfig, ds: &Dataset, modes: &[AblationMode]) -> Result<Vec<ExperimentReport>> {
    config.validate()?;
    if modes.is_empty() {
        return Err(BenchError::usage("no modes to run"));
    }
    let params = config.train_params();
    let start = Instant::now();
    let per_repeat: Vec<Result<Vec<RepeatResult>>> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(ds, config, &params, r, modes))
        .collect();
    let mut by_mode: Vec<Vec<RepeatResult>> = vec![Vec::with_capacity(config.repeats); modes.len()];
    for result in per_repeat {
        for (slot, rr) in by_mode.iter_mut().zip(result?) {
            slot.push(rr);
        }
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(modes
        .iter()
        .zip(by_mode)
        .map(|(&mode, rs)| ExperimentReport::new(config, mode, rs, wall))
        .collect())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let ds = config.load_dataset()?;
    run_experiment_on(config, &ds)
}

pub fn run_experiment_on(config: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentReport> {
    Ok(run_modes(config, ds, &[config.mode])?.remove(0))
}

/// The three modes on identical splits, ordered salient-only, shared-single, full.
pub fn run_ablation(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    let ds = config.load_dataset()?;
    run_modes(config, &ds, &AblationMode::ALL)
}

pub fn report_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for rep in reports {
        for r in &rep.repeats {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.repeat,
                r.seed,
                r.train_per_class,
                r.mode,
                r.accuracy,
                r.iters_latlrr,
                r.sweeps_dtml,
                r.objective_final
            )
            .unwrap();
        }
    }
    out
}

pub fn convergence_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in &report.repeats {
        for s in &r.trace {
            writeln!(out, "{},{},{},{}", r.repeat, s.sweep, s.objective, s.train_accuracy).unwrap();
        }
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    mode: String,
    formula: &'static str,
    repeats: usize,
    mean_accuracy: f64,
    std_accuracy: f64,
    accuracies: Vec<f64>,
    wall_time_secs: f64,
    config: &'a ExperimentConfig,
}

fn summary(rep: &ExperimentReport) -> Summary<'_> {
    Summary {
        mode: rep.mode.to_string(),
        formula: rep.mode.formula(),
        repeats: rep.repeats.len(),
        mean_accuracy: rep.mean,
        std_accuracy: rep.std,
        accuracies: rep.accuracies(),
        wall_time_secs: rep.wall_time_secs,
        config: &rep.config,
    }
}

pub fn summary_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(&summary(report)).expect("summary serializes")
}

pub fn summaries_json(reports: &[ExperimentReport]) -> String {
    let all: Vec<_> = reports.iter().map(summary).collect();
    serde_json::to_string_pretty(&all).expect("summary serializes")
}

/// Mean accuracy per mode (rows) and training size (columns).
pub fn ablation_table_csv(sizes: &[usize], rows: &[(AblationMode, Vec<f64>)]) -> String {
    let mut out = String::from("mode,formula");
    for k in sizes {
        write!(out, ",train_{k}").unwrap();
    }
    out.push('\n');
    for (mode, means) in rows {
        write!(out, "{},{}", mode, mode.formula()).unwrap();
        for m in means {
            write!(out, ",{m}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| BenchError::io(path, e))
}

/// `report.csv`, `convergence.csv` and `summary.json` in `dir`.
pub fn write_experiment(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write_file(&dir.join("report.csv"), &report_csv(std::slice::from_ref(report)))?;
    write_file(&dir.join("convergence.csv"), &convergence_csv(report))?;
    write_file(&dir.join("summary.json"), &summary_json(report))
}
