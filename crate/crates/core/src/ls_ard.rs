//! Sparse regression with automatic relevance determination under Gaussian
//! noise, fitted by type-II maximum likelihood.
//!
//! Each iteration computes the Gaussian weight posterior
//! `Sigma = (X^T X / s2 + A)^-1`, `mu = Sigma X^T t / s2`, then applies the
//! evidence fixed-point updates `a_d = gamma_d / mu_d^2` with
//! `gamma_d = 1 - a_d Sigma_dd` and `s2 = |t - X mu|^2 / (N - sum gamma)`.
//! Features whose relevance reaches the pruning threshold are dropped and all
//! further linear algebra runs on the reduced column set.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::PrecisionSystem;
use crate::model::{FitConfig, FitWarning, SparseLinearModel};

/// Lower bound on the noise variance.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-12;

/// Posterior over the weights of the active features.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub noise_variance: f64,
}

/// Output of one type-II maximum-likelihood step.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperUpdate {
    pub relevance: Vec<f64>,
    pub noise_variance: f64,
    /// Well-determinedness `gamma_d = 1 - a_d Sigma_dd`, clamped to `[0, 1]`.
    pub gamma: Vec<f64>,
    pub noise_floored: bool,
    /// `N - sum(gamma) <= 0`; the incoming noise variance was kept.
    pub degenerate: bool,
}

fn check_relevance(relevance: &[f64], dim: usize) -> Result<()> {
    if relevance.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "relevance has {} entries but dataset has {dim} features",
            relevance.len()
        )));
    }
    if relevance.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
        return Err(Error::InvalidConfig("relevance values must be finite and positive".into()));
    }
    Ok(())
}

fn check_noise(noise_variance: f64) -> Result<()> {
    if noise_variance.is_finite() && noise_variance > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("noise variance must be positive, got {noise_variance}")))
    }
}

fn precision_system(x: &DMatrix<f64>, a: &DVector<f64>, noise_variance: f64, jitter: f64) -> Result<PrecisionSystem> {
    let beta = DVector::from_element(x.nrows(), 1.0 / noise_variance);
    PrecisionSystem::new(x, &beta, a, jitter)
}

/// Posterior mean and covariance of all `D` weights for fixed hyper-parameters.
pub fn posterior(dataset: &Dataset, relevance: &[f64], noise_variance: f64) -> Result<GaussianPosterior> {
    check_relevance(relevance, dataset.n_features())?;
    check_noise(noise_variance)?;
    let x = dataset.design();
    let a = DVector::from_column_slice(relevance);
    let sys = precision_system(x, &a, noise_variance, 0.0)?;
    let mean = sys.solve(&(x.tr_mul(dataset.targets()) / noise_variance));
    Ok(GaussianPosterior { mean, covariance: sys.inverse(), noise_variance })
}

/// Core of the hyper-parameter update on raw moments.
fn hyper_step(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    mean: &DVector<f64>,
    cov_diag: &DVector<f64>,
    relevance: &[f64],
    noise_variance: f64,
    prune_threshold: f64,
) -> HyperUpdate {
    let mut gamma = Vec::with_capacity(relevance.len());
    let mut new_relevance = Vec::with_capacity(relevance.len());
    for (d, &a) in relevance.iter().enumerate() {
        let g = (1.0 - a * cov_diag[d]).clamp(0.0, 1.0);
        let mu2 = mean[d] * mean[d];
        let a_new = if mu2 == 0.0 || g == 0.0 { prune_threshold } else { g / mu2 };
        gamma.push(g);
        new_relevance.push(if a_new.is_finite() { a_new } else { prune_threshold });
    }
    let resid = (t - x * mean).norm_squared();
    let denom = x.nrows() as f64 - gamma.iter().sum::<f64>();
    let (mut s2, degenerate) = if denom > 0.0 { (resid / denom, false) } else { (noise_variance, true) };
    let noise_floored = !(s2 >= NOISE_VARIANCE_FLOOR);
    if noise_floored {
        s2 = NOISE_VARIANCE_FLOOR;
    }
    HyperUpdate { relevance: new_relevance, noise_variance: s2, gamma, noise_floored, degenerate }
}

/// One type-II maximum-likelihood update of relevances and noise variance.
///
/// A zero posterior mean sends the relevance straight to `prune_threshold`.
pub fn update_hyperparams(
    posterior: &GaussianPosterior,
    dataset: &Dataset,
    relevance: &[f64],
    prune_threshold: f64,
) -> Result<HyperUpdate> {
    check_relevance(relevance, dataset.n_features())?;
    if posterior.mean.len() != relevance.len() {
        return Err(Error::DimensionMismatch("posterior and relevance lengths differ".into()));
    }
    Ok(hyper_step(
        dataset.design(),
        dataset.targets(),
        &posterior.mean,
        &posterior.covariance.diagonal(),
        relevance,
        posterior.noise_variance,
        prune_threshold,
    ))
}

fn log_evidence(x: &DMatrix<f64>, t: &DVector<f64>, a: &DVector<f64>, noise_variance: f64) -> Result<f64> {
    let n = x.nrows();
    let mut scaled = x.clone();
    for (mut col, &ad) in scaled.column_iter_mut().zip(a.iter()) {
        col /= ad.sqrt();
    }
    let mut c = &scaled * scaled.transpose();
    for i in 0..n {
        c[(i, i)] += noise_variance;
    }
    let chol = Cholesky::new(c).ok_or(Error::Singular("marginal covariance"))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = t.dot(&chol.solve(t));
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Log marginal likelihood `log N(t | 0, s2 I + X A^-1 X^T)`.
pub fn log_marginal_likelihood(dataset: &Dataset, relevance: &[f64], noise_variance: f64) -> Result<f64> {
    check_relevance(relevance, dataset.n_features())?;
    check_noise(noise_variance)?;
    log_evidence(dataset.design(), dataset.targets(), &DVector::from_column_slice(relevance), noise_variance)
}

fn population_variance(t: &DVector<f64>) -> f64 {
    let n = t.len() as f64;
    let mean = t.sum() / n;
    t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Fits LS-ARD. The objective trace holds the log marginal likelihood at
/// initialization followed by its value after every outer iteration.
pub fn fit_ls_ard(dataset: &Dataset, config: &FitConfig) -> Result<SparseLinearModel> {
    config.validate()?;
    let (n, dim) = (dataset.n_samples(), dataset.n_features());
    if n == 0 || dim == 0 {
        return Err(Error::Empty("dataset"));
    }
    let t = dataset.targets();
    let x_full = dataset.design();
    let threshold = config.prune_threshold;

    let mut model = SparseLinearModel::zero(dim, threshold);
    model.warnings.clear();
    model.converged = false;
    model.relevance = vec![1.0; dim];

    let mut active: Vec<usize> = (0..dim).collect();
    let mut noise_variance = population_variance(t);
    if !(noise_variance >= NOISE_VARIANCE_FLOOR) {
        noise_variance = NOISE_VARIANCE_FLOOR;
        model.warn(FitWarning::NoiseVarianceFloored);
    }
    let mut weights = DVector::<f64>::zeros(dim);
    let mut x = x_full.clone();

    let active_relevance = |model: &SparseLinearModel, active: &[usize]| -> DVector<f64> {
        DVector::from_iterator(active.len(), active.iter().map(|&d| model.relevance[d]))
    };

    model.objective_trace.push(log_evidence(&x, t, &active_relevance(&model, &active), noise_variance)?);

    for iter in 1..=config.max_outer_iters {
        model.iterations = iter;
        let a = active_relevance(&model, &active);
        let sys = precision_system(&x, &a, noise_variance, config.jitter)?;
        let mean = sys.solve(&(x.tr_mul(t) / noise_variance));
        let cov_diag = sys.inverse_diagonal();
        let upd = hyper_step(&x, t, &mean, &cov_diag, a.as_slice(), noise_variance, threshold);
        if upd.noise_floored {
            model.warn(FitWarning::NoiseVarianceFloored);
        }
        if upd.degenerate {
            model.warn(FitWarning::DegenerateNoiseUpdate);
        }

        let mut new_weights = DVector::<f64>::zeros(dim);
        let mut kept = Vec::with_capacity(active.len());
        let mut kept_local = Vec::with_capacity(active.len());
        for (k, &d) in active.iter().enumerate() {
            model.relevance[d] = upd.relevance[k];
            if upd.relevance[k] >= threshold {
                continue;
            }
            new_weights[d] = mean[k];
            kept.push(d);
            kept_local.push(k);
        }
        noise_variance = upd.noise_variance;

        let change = relative_change(&new_weights, &weights);
        weights = new_weights;
        if kept.len() != active.len() {
            x = x.select_columns(kept_local.iter());
            active = kept;
        }
        if active.is_empty() {
            model.objective_trace.push(log_evidence(&x, t, &DVector::zeros(0), noise_variance)?);
            model.warn(FitWarning::AllPruned);
            model.converged = true;
            break;
        }
        model.objective_trace.push(log_evidence(&x, t, &active_relevance(&model, &active), noise_variance)?);
        if change < config.tol_w {
            model.converged = true;
            break;
        }
    }

    model.weights = vec![0.0; dim];
    model.posterior_variances = vec![0.0; dim];
    if !active.is_empty() {
        let a = active_relevance(&model, &active);
        let sys = precision_system(&x, &a, noise_variance, config.jitter)?;
        let mean = sys.solve(&(x.tr_mul(t) / noise_variance));
        let var = sys.inverse_diagonal();
        for (k, &d) in active.iter().enumerate() {
            model.weights[d] = mean[k];
            model.posterior_variances[d] = var[k].max(0.0);
        }
    }
    model.active = active;
    Ok(model)
}

/// `|new - old| / |old|`, or the absolute change when `old` is zero.
pub(crate) fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let diff = (new - old).norm();
    let base = old.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}
