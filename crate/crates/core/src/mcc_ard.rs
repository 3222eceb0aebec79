//! Variational-Bayes MCC-ARD.
//!
//! The weight factor of the mean-field posterior is
//!
//! ```text
//! log Q_w(w) = sum_n log p(e_n) - 1/2 w^T A w,    e_n = t_n - x_n w
//! ```
//!
//! where `log p(e) = exp(-e^2 / 2h)` for the deviant density and
//! `log(exp(exp(-e^2 / 2h)) - 1)` for the proper one. Each outer iteration
//!
//! 1. finds the mode `w*` of `log Q_w` (fixed-point iteration for the deviant
//!    density, damped Newton for the proper one),
//! 2. takes the Laplace approximation `Q_w = N(w*, H(w*)^-1)` and reads the
//!    posterior variances `s_d^2` off the diagonal of `H^-1`,
//! 3. updates the relevances with `a_d <- (1 - a_d s_d^2) / w_d*^2`,
//! 4. prunes every feature whose relevance reaches the threshold.
//!
//! Setting the gradient `X^T Psi e / h - A w` to zero gives the fixed point
//! `w = (X^T Psi X + h A)^-1 X^T Psi t` with `Psi = diag(exp(-e_n^2 / 2h))`.

use nalgebra::{DMatrix, DVector};

use crate::correntropy::{log_density_term, residual_curvature, residuals, KernelBandwidth};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{weighted_xty, PrecisionSystem};
use crate::ls_ard::relative_change;
use crate::model::{FitConfig, FitWarning, HessianMode, LikelihoodVariant, SparseLinearModel};

/// Squared weights below this are treated as zero by [`update_relevance`].
pub const MIN_WEIGHT_SQUARED: f64 = 1e-24;

/// Laplace approximation at the mode of `log Q_w` for the active features.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceState {
    pub w_star: DVector<f64>,
    /// Negative Hessian actually used (exact or Gauss-Newton surrogate).
    pub hessian: DMatrix<f64>,
    pub s_squared: DVector<f64>,
    pub relevance_mean: DVector<f64>,
    pub used_gauss_newton: bool,
}

/// Result of the inner weight solver.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub weights: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `log Q_w` at the starting point and after every iteration.
    pub objective_path: Vec<f64>,
}

/// Per-fit diagnostics not stored on the model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Number of active features after each outer iteration.
    pub active_counts: Vec<usize>,
    /// `|w - F(w)| / |w|` for the returned weights, `F` the fixed-point map.
    pub stationarity_residual: f64,
    /// Outer iterations whose Laplace step used the Gauss-Newton surrogate.
    pub gauss_newton_steps: usize,
    /// Inner iterations (deviant only) where `log Q_w` did not decrease, and the total.
    pub inner_ascent_steps: usize,
    pub inner_steps: usize,
}

fn check_inputs(dataset: &Dataset, relevance: &[f64], w: &[f64]) -> Result<()> {
    let d = dataset.n_features();
    if relevance.len() != d || w.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected {d} relevances and weights, got {} and {}",
            relevance.len(),
            w.len()
        )));
    }
    if relevance.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
        return Err(Error::InvalidConfig("relevance values must be finite and positive".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    Ok(())
}

/// `log Q_w(w)` up to an additive constant.
fn log_q(x: &DMatrix<f64>, t: &DVector<f64>, w: &DVector<f64>, a: &DVector<f64>, h: f64, variant: LikelihoodVariant) -> f64 {
    let e = residuals(x, t, w);
    let data: f64 = e.iter().map(|&r| log_density_term(r, h, variant)).sum();
    let prior: f64 = w.iter().zip(a.iter()).map(|(wd, ad)| ad * wd * wd).sum();
    data - 0.5 * prior
}

/// `log Q_w` for a full-length weight vector.
pub fn log_q_w(dataset: &Dataset, w: &[f64], relevance: &[f64], h: KernelBandwidth, variant: LikelihoodVariant) -> Result<f64> {
    check_inputs(dataset, relevance, w)?;
    Ok(log_q(
        dataset.design(),
        dataset.targets(),
        &DVector::from_column_slice(w),
        &DVector::from_column_slice(relevance),
        h.get(),
        variant,
    ))
}

/// Sample weights `omega_n` of the stationarity condition at `w`.
fn sample_weights(e: &DVector<f64>, h: f64, variant: LikelihoodVariant) -> DVector<f64> {
    e.map(|r| residual_curvature(r, h, variant).weight)
}

/// One application of the fixed-point map `(X^T W X + h A)^-1 X^T W t`.
fn fixed_point_map(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    w: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    variant: LikelihoodVariant,
    jitter: f64,
) -> Result<DVector<f64>> {
    let omega = sample_weights(&residuals(x, t, w), h, variant) / h;
    let sys = PrecisionSystem::new(x, &omega, a, jitter)?;
    Ok(sys.solve(&weighted_xty(x, &omega, t)))
}

fn stationarity(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    w: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    variant: LikelihoodVariant,
    jitter: f64,
) -> Result<f64> {
    let mapped = fixed_point_map(x, t, w, a, h, variant, jitter)?;
    let diff = (w - &mapped).norm();
    let norm = w.norm();
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

/// Relative fixed-point residual `|w - F(w)| / |w|` of full-length weights.
pub fn stationarity_residual(
    dataset: &Dataset,
    w: &[f64],
    relevance: &[f64],
    h: KernelBandwidth,
    variant: LikelihoodVariant,
) -> Result<f64> {
    check_inputs(dataset, relevance, w)?;
    stationarity(
        dataset.design(),
        dataset.targets(),
        &DVector::from_column_slice(w),
        &DVector::from_column_slice(relevance),
        h.get(),
        variant,
        0.0,
    )
}

fn fixed_point_inner(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    w_init: DVector<f64>,
    max_iters: usize,
    tol: f64,
    jitter: f64,
) -> Result<FixedPointResult> {
    let variant = LikelihoodVariant::Deviant;
    let mut w = w_init;
    let mut path = vec![log_q(x, t, &w, a, h, variant)];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let next = fixed_point_map(x, t, &w, a, h, variant, jitter)?;
        let diff = (&next - &w).norm();
        let norm = next.norm();
        let rel = if norm > 0.0 { diff / norm } else { diff };
        w = next;
        path.push(log_q(x, t, &w, a, h, variant));
        if rel < tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointResult { weights: w, iterations, converged, objective_path: path })
}

/// Damped Newton ascent on `log Q_w`; the Gauss-Newton surrogate replaces the
/// Hessian wherever the latter is not positive definite.
fn newton_inner(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    variant: LikelihoodVariant,
    w_init: DVector<f64>,
    max_iters: usize,
    tol: f64,
    jitter: f64,
) -> Result<FixedPointResult> {
    let mut w = w_init;
    let mut f = log_q(x, t, &w, a, h, variant);
    let mut path = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let e = residuals(x, t, &w);
        let (omega, curv): (Vec<f64>, Vec<f64>) = e
            .iter()
            .map(|&r| {
                let c = residual_curvature(r, h, variant);
                (c.weight, c.curvature)
            })
            .unzip();
        let omega = DVector::from_vec(omega);
        let grad = x.tr_mul(&omega.component_mul(&e)) / h - a.component_mul(&w);
        let exact = PrecisionSystem::new(x, &DVector::from_vec(curv), a, jitter).ok().filter(|s| s.is_positive_definite());
        let sys = match exact {
            Some(s) => s,
            None => PrecisionSystem::new(x, &(&omega / h), a, jitter)?,
        };
        let dir = sys.solve(&grad);
        let slope = grad.dot(&dir);
        if !(slope > 0.0) {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand = &w + &dir * step;
            let fc = log_q(x, t, &cand, a, h, variant);
            if fc >= f + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            // No ascent is numerically possible: w is a maximizer to working precision.
            converged = true;
            break;
        };
        let diff = (&next - &w).norm();
        let norm = next.norm();
        let rel = if norm > 0.0 { diff / norm } else { diff };
        w = next;
        f = fnext;
        path.push(f);
        if rel < tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointResult { weights: w, iterations, converged, objective_path: path })
}

fn inner_solve(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    variant: LikelihoodVariant,
    w_init: DVector<f64>,
    max_iters: usize,
    tol: f64,
    jitter: f64,
) -> Result<FixedPointResult> {
    match variant {
        LikelihoodVariant::Deviant => fixed_point_inner(x, t, a, h, w_init, max_iters, tol, jitter),
        LikelihoodVariant::Proper => newton_inner(x, t, a, h, variant, w_init, max_iters, tol, jitter),
    }
}

/// Maximizes `log Q_w` for the deviant density by fixed-point iteration,
/// starting from `w_init` and stopping when the relative change drops below
/// `tol_fp` or after `max_iters` iterations.
pub fn fixed_point_weights(
    dataset: &Dataset,
    relevance: &[f64],
    h: KernelBandwidth,
    w_init: &[f64],
    max_iters: usize,
    tol_fp: f64,
) -> Result<FixedPointResult> {
    check_inputs(dataset, relevance, w_init)?;
    fixed_point_inner(
        dataset.design(),
        dataset.targets(),
        &DVector::from_column_slice(relevance),
        h.get(),
        DVector::from_column_slice(w_init),
        max_iters,
        tol_fp,
        0.0,
    )
}

fn hessian_weights(e: &DVector<f64>, h: f64, variant: LikelihoodVariant) -> DVector<f64> {
    e.map(|r| residual_curvature(r, h, variant).curvature)
}

fn dense_hessian(x: &DMatrix<f64>, c: &DVector<f64>, a: &DVector<f64>) -> DMatrix<f64> {
    let mut cx = x.clone();
    for mut col in cx.column_iter_mut() {
        col.component_mul_assign(c);
    }
    let mut hm = x.tr_mul(&cx);
    hm = (&hm + hm.transpose()) * 0.5;
    for i in 0..a.len() {
        hm[(i, i)] += a[i];
    }
    hm
}

/// Negative Hessian of `log Q_w` for the deviant density:
/// `-(1/h) sum_n x_n^T exp(-e_n^2 / 2h) (e_n^2 / h - 1) x_n + A`.
pub fn negative_hessian(dataset: &Dataset, w: &[f64], relevance: &[f64], h: KernelBandwidth) -> Result<DMatrix<f64>> {
    negative_hessian_for(dataset, w, relevance, h, LikelihoodVariant::Deviant)
}

/// Negative Hessian of `log Q_w` for either density.
pub fn negative_hessian_for(
    dataset: &Dataset,
    w: &[f64],
    relevance: &[f64],
    h: KernelBandwidth,
    variant: LikelihoodVariant,
) -> Result<DMatrix<f64>> {
    check_inputs(dataset, relevance, w)?;
    let x = dataset.design();
    let e = residuals(x, dataset.targets(), &DVector::from_column_slice(w));
    Ok(dense_hessian(x, &hessian_weights(&e, h.get(), variant), &DVector::from_column_slice(relevance)))
}

struct LaplaceVariances {
    s_squared: DVector<f64>,
    gauss_newton: bool,
    clamped: bool,
}

fn laplace_variances(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    w: &DVector<f64>,
    a: &DVector<f64>,
    h: f64,
    variant: LikelihoodVariant,
    mode: HessianMode,
    jitter: f64,
) -> Result<LaplaceVariances> {
    let e = residuals(x, t, w);
    let gauss_newton = || -> Result<LaplaceVariances> {
        let c = sample_weights(&e, h, variant) / h;
        let sys = PrecisionSystem::new(x, &c, a, jitter)?;
        Ok(LaplaceVariances { s_squared: sys.inverse_diagonal().map(|v| v.max(0.0)), gauss_newton: true, clamped: false })
    };
    if mode == HessianMode::GaussNewton {
        return gauss_newton();
    }
    let exact = PrecisionSystem::new(x, &hessian_weights(&e, h, variant), a, jitter);
    let Ok(sys) = exact else {
        return gauss_newton();
    };
    let diag = sys.inverse_diagonal();
    let negative = diag.iter().any(|&v| !(v > 0.0));
    match mode {
        HessianMode::Auto if negative || !sys.is_positive_definite() => gauss_newton(),
        _ => Ok(LaplaceVariances { clamped: negative, s_squared: diag.map(|v| v.max(0.0)), gauss_newton: false }),
    }
}

/// Laplace approximation for full-length inputs (no pruning).
pub fn laplace_state(
    dataset: &Dataset,
    w_star: &[f64],
    relevance: &[f64],
    h: KernelBandwidth,
    variant: LikelihoodVariant,
    mode: HessianMode,
    prune_threshold: f64,
) -> Result<LaplaceState> {
    check_inputs(dataset, relevance, w_star)?;
    let (x, t) = (dataset.design(), dataset.targets());
    let w = DVector::from_column_slice(w_star);
    let a = DVector::from_column_slice(relevance);
    let lv = laplace_variances(x, t, &w, &a, h.get(), variant, mode, 0.0)?;
    let e = residuals(x, t, &w);
    let c = if lv.gauss_newton { sample_weights(&e, h.get(), variant) / h.get() } else { hessian_weights(&e, h.get(), variant) };
    let relevance_mean =
        DVector::from_vec(update_relevance(w_star, lv.s_squared.as_slice(), relevance, prune_threshold));
    Ok(LaplaceState {
        hessian: dense_hessian(x, &c, &a),
        w_star: w,
        s_squared: lv.s_squared,
        relevance_mean,
        used_gauss_newton: lv.gauss_newton,
    })
}

/// Fast relevance update `a_d <- (1 - a_d s_d^2) / w_d^2`.
///
/// Entries with a non-positive numerator or `w_d^2 < 1e-24` go straight to
/// `prune_threshold`.
pub fn update_relevance(w_star: &[f64], s_squared: &[f64], relevance_prev: &[f64], prune_threshold: f64) -> Vec<f64> {
    w_star
        .iter()
        .zip(s_squared)
        .zip(relevance_prev)
        .map(|((&w, &s2), &a)| {
            let num = 1.0 - a * s2;
            let w2 = w * w;
            if !(num > 0.0) || !(w2 >= MIN_WEIGHT_SQUARED) {
                prune_threshold
            } else {
                let v = num / w2;
                if v.is_finite() {
                    v
                } else {
                    prune_threshold
                }
            }
        })
        .collect()
}

/// Log joint density at the mode, used as the free-energy surrogate.
fn log_joint(x: &DMatrix<f64>, t: &DVector<f64>, w: &DVector<f64>, a: &DVector<f64>, h: f64, variant: LikelihoodVariant) -> f64 {
    log_q(x, t, w, a, h, variant) - 0.5 * a.iter().map(|v| v.ln()).sum::<f64>()
}

pub fn fit_mcc_ard(dataset: &Dataset, config: &FitConfig) -> Result<SparseLinearModel> {
    fit_mcc_ard_with_diagnostics(dataset, config).map(|(m, _)| m)
}

/// Budget of the final mode search that makes the returned weights stationary.
fn polish_budget(config: &FitConfig) -> usize {
    (20 * config.max_inner_fp_iters).max(500)
}

pub fn fit_mcc_ard_with_diagnostics(dataset: &Dataset, config: &FitConfig) -> Result<(SparseLinearModel, FitDiagnostics)> {
    config.validate()?;
    let (n, dim) = (dataset.n_samples(), dataset.n_features());
    if n == 0 || dim == 0 {
        return Err(Error::Empty("dataset"));
    }
    let h = config.kernel_bandwidth;
    let variant = config.likelihood_variant;
    let threshold = config.prune_threshold;
    let t = dataset.targets();

    let mut model = SparseLinearModel::zero(dim, threshold);
    model.warnings.clear();
    model.converged = false;
    model.relevance = vec![1.0; dim];
    let mut diag = FitDiagnostics::default();

    let mut x = dataset.design().clone();
    let mut active: Vec<usize> = (0..dim).collect();

    // Ridge warm start (X^T X + I)^-1 X^T t.
    let ones_n = DVector::from_element(n, 1.0);
    let mut w_act = PrecisionSystem::new(&x, &ones_n, &DVector::from_element(dim, 1.0), config.jitter)?.solve(&x.tr_mul(t));
    if w_act.iter().any(|v| !v.is_finite()) {
        w_act.fill(0.0);
    }
    let mut prev_full = w_act.clone();

    let relevance_of = |model: &SparseLinearModel, active: &[usize]| {
        DVector::from_iterator(active.len(), active.iter().map(|&d| model.relevance[d]))
    };

    for iter in 1..=config.max_outer_iters {
        model.iterations = iter;
        let a = relevance_of(&model, &active);
        let inner = inner_solve(&x, t, &a, h, variant, w_act, config.max_inner_fp_iters, config.tol_fp, config.jitter)?;
        if !inner.converged {
            model.warn(FitWarning::InnerNotConverged);
        }
        if variant == LikelihoodVariant::Deviant {
            diag.inner_steps += inner.objective_path.len() - 1;
            diag.inner_ascent_steps +=
                inner.objective_path.windows(2).filter(|p| p[1] >= p[0] - 1e-12 * p[0].abs().max(1.0)).count();
        }
        w_act = inner.weights;

        let lv = laplace_variances(&x, t, &w_act, &a, h, variant, config.hessian_mode, config.jitter)?;
        if lv.gauss_newton && config.hessian_mode != HessianMode::GaussNewton {
            diag.gauss_newton_steps += 1;
            model.warn(FitWarning::GaussNewtonFallback);
        }
        if lv.clamped {
            model.warn(FitWarning::NegativeVarianceClamped);
        }
        model.objective_trace.push(log_joint(&x, t, &w_act, &a, h, variant));

        let a_new = update_relevance(w_act.as_slice(), lv.s_squared.as_slice(), a.as_slice(), threshold);
        let mut full = DVector::<f64>::zeros(dim);
        let mut kept = Vec::with_capacity(active.len());
        let mut kept_local = Vec::with_capacity(active.len());
        for (k, &d) in active.iter().enumerate() {
            model.relevance[d] = a_new[k];
            if a_new[k] >= threshold {
                continue;
            }
            full[d] = w_act[k];
            kept.push(d);
            kept_local.push(k);
        }
        let change = relative_change(&full, &prev_full);
        prev_full = full;
        if kept.len() != active.len() {
            x = x.select_columns(kept_local.iter());
            w_act = w_act.select_rows(kept_local.iter());
            active = kept;
        }
        diag.active_counts.push(active.len());
        if active.is_empty() {
            model.warn(FitWarning::AllPruned);
            model.converged = true;
            break;
        }
        if change < config.tol_w {
            model.converged = true;
            break;
        }
    }

    model.weights = vec![0.0; dim];
    model.posterior_variances = vec![0.0; dim];
    if !active.is_empty() {
        let a = relevance_of(&model, &active);
        let inner = inner_solve(&x, t, &a, h, variant, w_act, polish_budget(config), config.tol_fp, config.jitter)?;
        let w = inner.weights;
        let lv = laplace_variances(&x, t, &w, &a, h, variant, config.hessian_mode, config.jitter)?;
        diag.stationarity_residual = stationarity(&x, t, &w, &a, h, variant, config.jitter)?;
        for (k, &d) in active.iter().enumerate() {
            model.weights[d] = w[k];
            model.posterior_variances[d] = lv.s_squared[k];
        }
    }
    model.active = active;
    Ok((model, diag))
}
