use super::rng::{self, Rng};
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Parameters of a union-of-subspaces dataset with sparse spike corruption.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub per_class: usize,
    /// Probability that an entry receives a spike.
    pub noise_fraction: f64,
    pub spike_magnitude: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 5,
            subspace_dim: 10,
            ambient_dim: 50,
            per_class: 20,
            noise_fraction: 0.05,
            spike_magnitude: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    /// Corrupted samples, class-major column order.
    pub dataset: Dataset,
    /// Uncorrupted samples.
    pub clean: Matrix,
    /// Planted spikes, `dataset.x = clean + spikes`.
    pub spikes: Matrix,
    /// Orthonormal `ambient_dim x subspace_dim` basis per class.
    pub bases: Vec<Matrix>,
}

fn gaussian(rng: &mut Rng) -> f64 {
    // Box–Muller, cosine branch only, so each call consumes two draws.
    let u1 = 1.0 - rng::unit(rng);
    let u2 = rng::unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    // Column-major fill order.
    let mut m = Matrix::zeros(rows, cols);
    for v in m.iter_mut() {
        *v = gaussian(rng);
    }
    m
}

/// Draw a dataset from `spec`.
///
/// Draw order: all class bases (Gaussian, then thin QR), then coefficients
/// uniform on `[0, 1) / sqrt(subspace_dim)` class by class, then one uniform per entry for
/// the spike mask (plus one for the sign of each spike).
pub fn synth_subspace_dataset(spec: &SynthSpec) -> Result<SynthData> {
    if spec.classes == 0 {
        return Err(Error::param("classes", "must be >= 1"));
    }
    if spec.per_class == 0 {
        return Err(Error::param("per_class", "must be >= 1"));
    }
    if spec.subspace_dim == 0 || spec.subspace_dim >= spec.ambient_dim {
        return Err(Error::param(
            "subspace_dim",
            format!("must satisfy 0 < subspace_dim < ambient_dim ({})", spec.ambient_dim),
        ));
    }
    if !(0.0..1.0).contains(&spec.noise_fraction) {
        return Err(Error::param("noise_fraction", format!("must be in [0, 1), got {}", spec.noise_fraction)));
    }
    if !(spec.spike_magnitude >= 0.0 && spec.spike_magnitude.is_finite()) {
        return Err(Error::param("spike_magnitude", "must be finite and >= 0"));
    }

    let mut rng = rng::seeded(spec.seed);
    let (m, d) = (spec.ambient_dim, spec.subspace_dim);
    let bases: Vec<Matrix> = (0..spec.classes)
        .map(|_| gaussian_matrix(&mut rng, m, d).qr().q())
        .collect();

    let n = spec.classes * spec.per_class;
    let mut clean = Matrix::zeros(m, n);
    let coeff_scale = 1.0 / (d as f64).sqrt();
    for (k, basis) in bases.iter().enumerate() {
        let coeffs = Matrix::from_fn(d, spec.per_class, |_, _| rng::unit(&mut rng)) * coeff_scale;
        clean
            .columns_mut(k * spec.per_class, spec.per_class)
            .copy_from(&(basis * coeffs));
    }

    let mut spikes = Matrix::zeros(m, n);
    if spec.noise_fraction > 0.0 {
        for v in spikes.iter_mut() {
            if rng::unit(&mut rng) < spec.noise_fraction {
                let sign = if rng::unit(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                *v = sign * spec.spike_magnitude;
            }
        }
    }

    let labels = (0..spec.classes)
        .flat_map(|k| std::iter::repeat_n(k, spec.per_class))
        .collect();
    let dataset = Dataset::new(&clean + &spikes, labels)?;
    Ok(SynthData {
        dataset,
        clean,
        spikes,
        bases,
    })
}
