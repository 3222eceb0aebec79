//! Synthetic sparse regression benchmark with Laplace outliers.
//!
//! Covariates are i.i.d. standard normal. The ground-truth weight vector has
//! standard-normal entries in its first `n_relevant` positions and zeros
//! elsewhere. Training targets carry mixture noise
//! `(1 - psi) N(0, s2) + psi Laplace(0, tau)`; test targets are noise-free.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, Rng as SourceRng};

/// Gaussian/Laplace contamination mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Variance of the clean Gaussian component.
    pub gaussian_variance: f64,
    /// Laplace scale `tau` of the outlier component.
    pub outlier_scale: f64,
    /// Outlier proportion `psi` in `[0, 1]`.
    pub outlier_proportion: f64,
}

impl NoiseSpec {
    pub fn new(gaussian_variance: f64, outlier_scale: f64, outlier_proportion: f64) -> Result<Self> {
        let spec = Self { gaussian_variance, outlier_scale, outlier_proportion };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_variance.is_finite() && self.gaussian_variance > 0.0) {
            return Err(Error::InvalidConfig(format!("gaussian_variance must be positive, got {}", self.gaussian_variance)));
        }
        if !(self.outlier_scale.is_finite() && self.outlier_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("outlier_scale must be positive, got {}", self.outlier_scale)));
        }
        if !(0.0..=1.0).contains(&self.outlier_proportion) {
            return Err(Error::InvalidConfig(format!(
                "outlier_proportion must lie in [0, 1], got {}",
                self.outlier_proportion
            )));
        }
        Ok(())
    }

    /// Draws one noise sample and reports whether it came from the outlier component.
    pub fn sample(&self, rng: &mut SourceRng) -> (f64, bool) {
        let u: f64 = rng.random();
        if u < self.outlier_proportion {
            (laplace_inverse_cdf(open_unit(rng), self.outlier_scale), true)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            (z * self.gaussian_variance.sqrt(), false)
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { gaussian_variance: 0.05, outlier_scale: 5.0, outlier_proportion: 0.0 }
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit(rng: &mut SourceRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Inverse CDF of the zero-mean Laplace distribution with scale `tau`.
pub fn laplace_inverse_cdf(u: f64, tau: f64) -> f64 {
    if u < 0.5 {
        tau * (2.0 * u).ln()
    } else {
        -tau * (2.0 * (1.0 - u)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_relevant: usize,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// 300 training and 300 test samples, 1000 features, 30 relevant.
    pub fn paper_scale(noise: NoiseSpec, seed: u64) -> Self {
        Self { n_train: 300, n_test: 300, dim: 1000, n_relevant: 30, noise, seed }
    }

    /// 100 training and 100 test samples, 200 features, 20 relevant.
    pub fn desk_scale(noise: NoiseSpec, seed: u64) -> Self {
        Self { n_train: 100, n_test: 100, dim: 200, n_relevant: 20, noise, seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.dim == 0 || self.n_train == 0 {
            return Err(Error::InvalidConfig("dim and n_train must be positive".into()));
        }
        if self.n_relevant > self.dim {
            return Err(Error::InvalidConfig(format!(
                "n_relevant ({}) exceeds dim ({})",
                self.n_relevant, self.dim
            )));
        }
        Ok(())
    }
}

fn standard_normal_matrix(rng: &mut SourceRng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major draw order so a row is a contiguous block of the stream.
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

/// Generated scenario plus the per-sample outlier indicators of the training noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub train: Dataset,
    pub test: Dataset,
    pub train_noise: Vec<f64>,
    pub outlier_mask: Vec<bool>,
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let mut truth = DVector::<f64>::zeros(spec.dim);
    for d in 0..spec.n_relevant {
        truth[d] = rng.sample(StandardNormal);
    }
    let x_train = standard_normal_matrix(&mut rng, spec.n_train, spec.dim);
    let (noise, mask): (Vec<f64>, Vec<bool>) = (0..spec.n_train).map(|_| spec.noise.sample(&mut rng)).unzip();
    let x_test = standard_normal_matrix(&mut rng, spec.n_test, spec.dim);

    let t_train = &x_train * &truth + DVector::from_column_slice(&noise);
    let t_test = &x_test * &truth;
    let train = Dataset::new(x_train, t_train)?.with_truth(truth.clone())?.with_seed(spec.seed);
    let test = Dataset::new(x_test, t_test)?.with_truth(truth)?.with_seed(spec.seed);
    Ok(Scenario { train, test, train_noise: noise, outlier_mask: mask })
}

/// Training set (noisy) and test set (noise-free) for `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, Dataset)> {
    generate_scenario(spec).map(|s| (s.train, s.test))
}
