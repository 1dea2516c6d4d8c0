//! Experiment configuration.
//!
//! Values are resolved with the precedence CLI flag > config file > default.
//! The resolved struct is serialized verbatim into every summary.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dtml_core::data::{load_dataset, synth_subspace_dataset, Dataset, SynthSpec};
use dtml_core::dtml::{AblationMode, FitOptions};
use dtml_core::latlrr::SolverOptions;
use dtml_core::pipeline::{NnTarget, TrainParams};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{BenchError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DTML_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dtml-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    /// CSV with one sample per row.
    pub matrix: PathBuf,
    /// One integer label per line.
    pub labels: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub classes: usize,
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub per_class: usize,
    pub noise_fraction: f64,
    pub spike_magnitude: f64,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthSettings {
            classes: s.classes,
            subspace_dim: s.subspace_dim,
            ambient_dim: s.ambient_dim,
            per_class: s.per_class,
            noise_fraction: s.noise_fraction,
            spike_magnitude: s.spike_magnitude,
            seed: s.seed,
        }
    }
}

impl From<SynthSettings> for SynthSpec {
    fn from(s: SynthSettings) -> Self {
        SynthSpec {
            classes: s.classes,
            subspace_dim: s.subspace_dim,
            ambient_dim: s.ambient_dim,
            per_class: s.per_class,
            noise_fraction: s.noise_fraction,
            spike_magnitude: s.spike_magnitude,
            seed: s.seed,
        }
    }
}

/// LatLRR solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSettings {
            tol: o.tol,
            max_iter: o.max_iter,
            mu0: o.mu0,
            rho: o.rho,
            mu_max: o.mu_max,
        }
    }
}

/// Weight-fit settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        let o = FitOptions::default();
        FitSettings {
            tol: o.tol,
            max_iter: o.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<FileSource>,
    pub synth: Option<SynthSettings>,
    /// `[height, width]` of each sample when it is a flattened image.
    pub image_shape: Option<(usize, usize)>,
    pub train_per_class: usize,
    pub repeats: usize,
    /// Repeat `r` splits with seed `seed_base + r`.
    pub seed_base: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    #[serde(serialize_with = "as_display", deserialize_with = "from_str")]
    pub mode: AblationMode,
    #[serde(serialize_with = "as_display", deserialize_with = "from_str")]
    pub nn_target: NnTarget,
    pub normalize: bool,
    pub rank_tol: Option<f64>,
    pub solver: SolverSettings,
    pub fit: FitSettings,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        ExperimentConfig {
            data: None,
            synth: None,
            image_shape: None,
            train_per_class: 10,
            repeats: 20,
            seed_base: 0,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            lambda3: p.lambda3,
            lambda4: p.lambda4,
            mode: p.mode,
            nn_target: p.nn_target,
            normalize: p.normalize,
            rank_tol: p.rank_tol,
            solver: SolverSettings::default(),
            fit: FitSettings::default(),
            out_dir: None,
        }
    }
}

fn as_display<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn from_str<'de, T, D>(d: D) -> Result<T, D::Error>
where
    T: FromStr,
    T::Err: Display,
    D: Deserializer<'de>,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        toml::from_str(&text).map_err(|e| BenchError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
            mode: self.mode,
            nn_target: self.nn_target,
            normalize: self.normalize,
            rank_tol: self.rank_tol,
            solver: SolverOptions {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
                mu0: self.solver.mu0,
                rho: self.solver.rho,
                mu_max: self.solver.mu_max,
            },
            fit: FitOptions {
                tol: self.fit.tol,
                max_iter: self.fit.max_iter,
            },
        }
    }

    /// Output directory: explicit setting, else `$DTML_OUT_DIR`, else `dtml-out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
        })
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(BenchError::usage("repeats must be >= 1"));
        }
        if self.train_per_class < 1 {
            return Err(BenchError::usage("train_per_class must be >= 1"));
        }
        if let Some(r) = self.rank_tol {
            if !(r >= 0.0) {
                return Err(BenchError::usage(format!("rank_tol must be >= 0, got {r}")));
            }
        }
        self.train_params()
            .validate()
            .map_err(|e| BenchError::usage(format!("validation error: {e}")))
    }

    /// Checks that the config names a data source.
    pub fn require_source(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (None, None) => Err(BenchError::usage(
                "no dataset: pass --data FILE --labels FILE or --synth (or set them in the config file)",
            )),
            (Some(_), Some(_)) => Err(BenchError::usage("both a dataset and a synth spec are configured")),
            _ => Ok(()),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        self.require_source()?;
        let ds = match (&self.data, &self.synth) {
            (Some(f), _) => load_dataset(&f.matrix, &f.labels)?,
            (None, Some(s)) => synth_subspace_dataset(&SynthSpec::from(*s))?.dataset,
            (None, None) => unreachable!("checked by require_source"),
        };
        Ok(match self.image_shape {
            Some((h, w)) => ds.with_image_shape(h, w)?,
            None => ds,
        })
    }
}
