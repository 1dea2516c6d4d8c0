//! Command-line front end of the `dtml` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use dtml_core::data::{accuracy, load_labels, load_matrix};
use dtml_core::dtml::AblationMode;
use dtml_core::pipeline::{train, NnTarget};

use crate::config::{ExperimentConfig, FileSource};
use crate::error::{BenchError, Result};
use crate::experiment::{
    ablation_table_csv, convergence_csv, report_csv, run_experiment_on, run_modes, summaries_json, write_experiment,
    write_file, ExperimentReport,
};
use crate::export::export_decomposition;
use crate::grid::{default_candidate_set, grid_search, surface_csv};
use crate::model_io::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(
    name = "dtml",
    version,
    about = "Double transformation matrix classification on latent low-rank features",
    after_help = "Values resolve as: command-line flag > --config file > built-in default.\n\
                  The output directory defaults to $DTML_OUT_DIR, else ./dtml-out.\n\
                  Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on every sample of a dataset and save the model as JSON.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Model output path [default: <out>/model.json]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify samples with a saved model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// CSV with one sample per row.
        #[arg(long)]
        data: PathBuf,
        /// Optional true labels; enables the accuracy line.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Predictions CSV [default: <out dir>/predictions.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated random splits: report.csv, convergence.csv, summary.json.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// All three modes on shared splits, plus a mode x training-size table.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated training sizes per class [default: --train-per-class]
        #[arg(long, value_delimiter = ',')]
        train_sizes: Vec<usize>,
    },
    /// Two-stage search over (lambda1, lambda2) then (lambda3, lambda4).
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated candidate values [default: 1e-5,5e-5,...,5e2,1e3]
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        /// Number of splits averaged per grid point
        #[arg(long, default_value_t = 1)]
        grid_repeats: usize,
    },
    /// Write original / principal / salient / noise PGMs for chosen samples.
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated sample indices (0-based columns)
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
    },
}

#[derive(Debug, Default, Args)]
struct CommonArgs {
    /// TOML config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Sample matrix CSV, one sample per row.
    #[arg(long, requires = "labels", conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Label file, one integer per line.
    #[arg(long, requires = "data")]
    labels: Option<PathBuf>,
    /// Use a synthetic union-of-subspaces dataset.
    #[arg(long)]
    synth: bool,
    /// Synthetic classes [default: 5]
    #[arg(long)]
    classes: Option<usize>,
    /// Synthetic subspace dimension [default: 10]
    #[arg(long)]
    subspace_dim: Option<usize>,
    /// Synthetic ambient dimension [default: 50]
    #[arg(long)]
    ambient_dim: Option<usize>,
    /// Synthetic samples per class [default: 20]
    #[arg(long)]
    per_class: Option<usize>,
    /// Synthetic spike probability per entry [default: 0.05]
    #[arg(long)]
    noise: Option<f64>,
    /// Synthetic spike magnitude [default: 0.5]
    #[arg(long)]
    spike_magnitude: Option<f64>,
    /// Synthetic data seed [default: 0]
    #[arg(long)]
    synth_seed: Option<u64>,
    /// Image shape of each sample, e.g. 32x32
    #[arg(long, value_parser = parse_shape)]
    image_shape: Option<(usize, usize)>,

    /// Training samples per class [default: 10]
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Random splits [default: 20]
    #[arg(long)]
    repeats: Option<usize>,
    /// Split seed of repeat 0; repeat r uses seed + r [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Nuclear-norm weight on L [default: 1]
    #[arg(long)]
    lambda1: Option<f64>,
    /// Sparse-noise weight on E [default: 5]
    #[arg(long)]
    lambda2: Option<f64>,
    /// Ridge weight on W1 (shared-single: on W) [default: 10]
    #[arg(long)]
    lambda3: Option<f64>,
    /// Ridge weight on W2 (salient-only: on W2) [default: 1]
    #[arg(long)]
    lambda4: Option<f64>,
    /// full, salient-only or shared-single [default: full]
    #[arg(long)]
    mode: Option<AblationMode>,
    /// Nearest-neighbour reference: gallery or labels [default: gallery]
    #[arg(long)]
    nn_target: Option<NnTarget>,
    /// Scale samples to unit norm before decomposition [default]
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    /// Use raw samples
    #[arg(long)]
    no_normalize: bool,
    /// Pseudo-inverse rank cut-off for the projection [default: max(m,n)*eps*s_max]
    #[arg(long)]
    rank_tol: Option<f64>,
    /// LatLRR stopping tolerance [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// LatLRR iteration cap [default: 500]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial augmented-Lagrangian penalty [default: 0.01]
    #[arg(long)]
    mu0: Option<f64>,
    /// Penalty growth factor [default: 1.1]
    #[arg(long)]
    rho: Option<f64>,
    /// Penalty cap [default: 1e10]
    #[arg(long)]
    mu_max: Option<f64>,
    /// Weight-fit relative objective change tolerance [default: 1e-6]
    #[arg(long)]
    fit_tol: Option<f64>,
    /// Weight-fit sweep cap [default: 100]
    #[arg(long)]
    fit_max_iter: Option<usize>,
    /// Output directory [default: $DTML_OUT_DIR or ./dtml-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 {
        return Err("image dimensions must be positive".into());
    }
    Ok((h, w))
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };

        if let (Some(matrix), Some(labels)) = (&self.data, &self.labels) {
            c.data = Some(FileSource {
                matrix: matrix.clone(),
                labels: labels.clone(),
            });
            c.synth = None;
        }
        let synth_flags = self.classes.is_some()
            || self.subspace_dim.is_some()
            || self.ambient_dim.is_some()
            || self.per_class.is_some()
            || self.noise.is_some()
            || self.spike_magnitude.is_some()
            || self.synth_seed.is_some();
        if self.synth {
            c.data = None;
            c.synth = Some(c.synth.unwrap_or_default());
        }
        if synth_flags {
            let s = c.synth.as_mut().ok_or_else(|| {
                BenchError::usage("synthetic-data flags need --synth (or a [synth] table in the config file)")
            })?;
            apply(&mut s.classes, self.classes);
            apply(&mut s.subspace_dim, self.subspace_dim);
            apply(&mut s.ambient_dim, self.ambient_dim);
            apply(&mut s.per_class, self.per_class);
            apply(&mut s.noise_fraction, self.noise);
            apply(&mut s.spike_magnitude, self.spike_magnitude);
            apply(&mut s.seed, self.synth_seed);
        }
        if self.image_shape.is_some() {
            c.image_shape = self.image_shape;
        }

        apply(&mut c.train_per_class, self.train_per_class);
        apply(&mut c.repeats, self.repeats);
        apply(&mut c.seed_base, self.seed);
        apply(&mut c.lambda1, self.lambda1);
        apply(&mut c.lambda2, self.lambda2);
        apply(&mut c.lambda3, self.lambda3);
        apply(&mut c.lambda4, self.lambda4);
        apply(&mut c.mode, self.mode);
        apply(&mut c.nn_target, self.nn_target);
        if self.no_normalize {
            c.normalize = false;
        } else if self.normalize {
            c.normalize = true;
        }
        if self.rank_tol.is_some() {
            c.rank_tol = self.rank_tol;
        }
        apply(&mut c.solver.tol, self.tol);
        apply(&mut c.solver.max_iter, self.max_iter);
        apply(&mut c.solver.mu0, self.mu0);
        apply(&mut c.solver.rho, self.rho);
        apply(&mut c.solver.mu_max, self.mu_max);
        apply(&mut c.fit.tol, self.fit_tol);
        apply(&mut c.fit.max_iter, self.fit_max_iter);
        if self.out.is_some() {
            c.out_dir = self.out.clone();
        }
        c.out_dir = Some(c.resolved_out_dir());

        c.validate()?;
        Ok(c)
    }
}

fn apply<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// What to run, with its resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    /// Help or version text; printed to stdout with exit code 0.
    Print(String),
    Train {
        model: PathBuf,
    },
    Predict {
        model: PathBuf,
        data: PathBuf,
        labels: Option<PathBuf>,
        out: PathBuf,
    },
    Bench,
    Ablate {
        train_sizes: Vec<usize>,
    },
    Grid {
        grid: Vec<f64>,
        grid_repeats: usize,
    },
    Decompose {
        indices: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub action: Action,
    pub config: ExperimentConfig,
}

pub fn parse_cli<I, T>(argv: I) -> Result<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return Ok(Invocation {
                action: Action::Print(e.render().to_string()),
                config: ExperimentConfig::default(),
            });
        }
        Err(e) => return Err(BenchError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let (action, config) = match cli.command {
        Command::Train { common, model } => {
            let c = common.resolve()?;
            c.require_source()?;
            let model = model.unwrap_or_else(|| c.resolved_out_dir().join("model.json"));
            (Action::Train { model }, c)
        }
        Command::Predict {
            model,
            data,
            labels,
            out,
        } => {
            let c = CommonArgs::default().resolve()?;
            let out = out.unwrap_or_else(|| c.resolved_out_dir().join("predictions.csv"));
            (
                Action::Predict {
                    model,
                    data,
                    labels,
                    out,
                },
                c,
            )
        }
        Command::Bench { common } => {
            let c = common.resolve()?;
            c.require_source()?;
            (Action::Bench, c)
        }
        Command::Ablate { common, train_sizes } => {
            let c = common.resolve()?;
            c.require_source()?;
            if train_sizes.contains(&0) {
                return Err(BenchError::usage("training sizes must be >= 1"));
            }
            let train_sizes = if train_sizes.is_empty() {
                vec![c.train_per_class]
            } else {
                train_sizes
            };
            (Action::Ablate { train_sizes }, c)
        }
        Command::Grid {
            common,
            grid,
            grid_repeats,
        } => {
            let c = common.resolve()?;
            c.require_source()?;
            let grid = if grid.is_empty() { default_candidate_set() } else { grid };
            (Action::Grid { grid, grid_repeats }, c)
        }
        Command::Decompose { common, indices } => {
            let c = common.resolve()?;
            c.require_source()?;
            (Action::Decompose { indices }, c)
        }
    };
    Ok(Invocation { action, config })
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_cli(argv).and_then(|inv| run(&inv)) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                BenchError::Usage(msg) => eprintln!("{msg}"),
                other => {
                    eprintln!("error: {other}");
                    let mut src = std::error::Error::source(other);
                    while let Some(s) = src {
                        eprintln!("  caused by: {s}");
                        src = s.source();
                    }
                }
            }
            e.exit_code()
        }
    }
}

fn print_report(rep: &ExperimentReport) {
    println!(
        "{:<14} train/class {:>3}  mean accuracy {:.4}  std {:.4}  over {} repeats",
        rep.mode.to_string(),
        rep.config.train_per_class,
        rep.mean,
        rep.std,
        rep.repeats.len()
    );
}

pub fn run(inv: &Invocation) -> Result<()> {
    let c = &inv.config;
    let out = c.resolved_out_dir();
    match &inv.action {
        Action::Print(text) => {
            print!("{text}");
            Ok(())
        }
        Action::Train { model } => {
            let ds = c.load_dataset()?;
            let trained = train(&ds.x, &ds.labels, &c.train_params())?;
            let pred = trained.classifier.predict_ids(&ds.x)?;
            save_model(&trained.classifier, model)?;
            println!(
                "trained on {} samples, {} classes: latlrr {} iterations, {} weight sweeps, training accuracy {:.4}",
                ds.len(),
                trained.codebook().class_count(),
                trained.latlrr.iterations(),
                trained.dtml.sweeps(),
                accuracy(&pred, &ds.labels)?
            );
            println!("model written to {}", model.display());
            Ok(())
        }
        Action::Predict {
            model,
            data,
            labels,
            out,
        } => {
            let clf = load_model(model)?;
            let x = load_matrix(data)?;
            let pred = clf.predict_ids(&x)?;
            let truth = labels.as_ref().map(load_labels).transpose()?;
            let mut csv = String::from(if truth.is_some() { "index,predicted,truth\n" } else { "index,predicted\n" });
            for (i, p) in pred.iter().enumerate() {
                match &truth {
                    Some(t) if i < t.len() => csv.push_str(&format!("{i},{p},{}\n", t[i])),
                    _ => csv.push_str(&format!("{i},{p}\n")),
                }
            }
            if let Some(t) = &truth {
                println!("accuracy {:.4} on {} samples", accuracy(&pred, t)?, pred.len());
            }
            write_file(out, &csv)?;
            println!("predictions written to {}", out.display());
            Ok(())
        }
        Action::Bench => {
            let ds = c.load_dataset()?;
            let rep = run_experiment_on(c, &ds)?;
            write_experiment(&out, &rep)?;
            print_report(&rep);
            println!("wall time {:.2} s; outputs in {}", rep.wall_time_secs, out.display());
            Ok(())
        }
        Action::Ablate { train_sizes } => {
            let ds = c.load_dataset()?;
            let mut all = Vec::new();
            for &k in train_sizes {
                let ck = ExperimentConfig {
                    train_per_class: k,
                    ..c.clone()
                };
                all.extend(run_modes(&ck, &ds, &AblationMode::ALL)?);
            }
            let rows: Vec<(AblationMode, Vec<f64>)> = AblationMode::ALL
                .iter()
                .map(|&m| (m, all.iter().filter(|r| r.mode == m).map(|r| r.mean).collect()))
                .collect();
            write_file(&out.join("report.csv"), &report_csv(&all))?;
            for rep in &all {
                let name = format!("convergence_{}_train{}.csv", rep.mode, rep.config.train_per_class);
                write_file(&out.join(name), &convergence_csv(rep))?;
            }
            write_file(&out.join("summary.json"), &summaries_json(&all))?;
            write_file(&out.join("ablation.csv"), &ablation_table_csv(train_sizes, &rows))?;
            for rep in &all {
                print_report(rep);
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Action::Grid { grid, grid_repeats } => {
            let ds = c.load_dataset()?;
            let res = grid_search(c, &ds, grid, *grid_repeats)?;
            write_file(&out.join("grid_stage1.csv"), &surface_csv(("lambda1", "lambda2"), &res.stage1))?;
            write_file(&out.join("grid_stage2.csv"), &surface_csv(("lambda3", "lambda4"), &res.stage2))?;
            let best = serde_json::json!({
                "lambda1": res.lambda1,
                "lambda2": res.lambda2,
                "lambda3": res.lambda3,
                "lambda4": res.lambda4,
                "stage1_score": res.stage1_score,
                "stage2_score": res.stage2_score,
                "grid": grid,
                "grid_repeats": grid_repeats,
                "config": c,
            });
            write_file(&out.join("grid_best.json"), &serde_json::to_string_pretty(&best).expect("json"))?;
            println!(
                "best lambda1 {} lambda2 {} (validation {:.4}); lambda3 {} lambda4 {} (validation {:.4})",
                res.lambda1, res.lambda2, res.stage1_score, res.lambda3, res.lambda4, res.stage2_score
            );
            println!("outputs in {}", out.display());
            Ok(())
        }
        Action::Decompose { indices } => {
            let ds = c.load_dataset()?;
            let files = export_decomposition(&ds, &c.train_params(), indices, &out)?;
            println!("wrote {} images to {}", files.len(), out.display());
            Ok(())
        }
    }
}
