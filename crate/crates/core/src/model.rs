//! Fitted sparse models and solver configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correntropy::KernelBandwidth;
use crate::error::{Error, Result};

/// Noise density used by the correntropy likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodVariant {
    /// `exp(exp(-e^2 / 2h))`: improper, tails converge to 1.
    #[default]
    Deviant,
    /// `exp(exp(-e^2 / 2h)) - 1`: normalizable, tails converge to 0.
    Proper,
}

/// How the Laplace step obtains posterior variances from the negative Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Always the exact negative Hessian; negative variances are clamped to zero.
    Exact,
    /// Always the positive-definite Gauss-Newton surrogate `X^T diag(psi/h) X + A`.
    GaussNewton,
    /// Exact when positive definite, otherwise Gauss-Newton.
    #[default]
    Auto,
}

/// Hyper-parameters shared by the ARD solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Gaussian kernel bandwidth `h` (squared-error units). Ignored by LS-ARD.
    pub kernel_bandwidth: f64,
    /// Relevance value at or above which a feature is pruned.
    pub prune_threshold: f64,
    pub max_outer_iters: usize,
    pub max_inner_fp_iters: usize,
    /// Relative change of the full-length weight vector that stops the outer loop.
    pub tol_w: f64,
    /// Relative change that stops the inner weight solver.
    pub tol_fp: f64,
    pub likelihood_variant: LikelihoodVariant,
    /// Added to every prior precision before a matrix factorization.
    pub jitter: f64,
    pub hessian_mode: HessianMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kernel_bandwidth: 1.0,
            prune_threshold: 1e6,
            max_outer_iters: 300,
            max_inner_fp_iters: 50,
            tol_w: 1e-6,
            tol_fp: 1e-8,
            likelihood_variant: LikelihoodVariant::Deviant,
            jitter: 1e-10,
            hessian_mode: HessianMode::Auto,
        }
    }
}

impl FitConfig {
    /// Defaults for LS-ARD, which runs a longer outer loop.
    pub fn ls_ard_default() -> Self {
        Self { max_outer_iters: 500, ..Self::default() }
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.kernel_bandwidth = h;
        self
    }

    pub fn with_variant(mut self, variant: LikelihoodVariant) -> Self {
        self.likelihood_variant = variant;
        self
    }

    pub fn bandwidth(&self) -> Result<KernelBandwidth> {
        KernelBandwidth::new(self.kernel_bandwidth)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and positive, got {v}")))
            }
        };
        positive("kernel_bandwidth", self.kernel_bandwidth)?;
        positive("tol_w", self.tol_w)?;
        positive("tol_fp", self.tol_fp)?;
        if !(self.prune_threshold.is_finite() && self.prune_threshold > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prune_threshold must exceed 1, got {}",
                self.prune_threshold
            )));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        if self.max_outer_iters == 0 || self.max_inner_fp_iters == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Non-fatal conditions recorded during a fit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// Every feature was pruned; the model predicts zero.
    AllPruned,
    /// The noise-variance estimate hit its floor (perfect fit).
    NoiseVarianceFloored,
    /// `N - sum(gamma) <= 0`; the previous noise variance was kept.
    DegenerateNoiseUpdate,
    /// The exact Hessian was not positive definite and the Gauss-Newton surrogate was used.
    GaussNewtonFallback,
    /// A negative posterior variance from the exact Hessian was clamped to zero.
    NegativeVarianceClamped,
    /// The inner weight solver hit its iteration cap.
    InnerNotConverged,
    /// L1 penalty of zero with more features than samples.
    IllPosedUnpenalized,
}

/// Result of any of the sparse solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearModel {
    /// Full-length weights; pruned entries are exactly zero.
    pub weights: Vec<f64>,
    /// Retained feature indices in increasing order.
    pub active: Vec<usize>,
    /// Relevance (prior precision) per feature; pruned entries sit at or above the threshold.
    pub relevance: Vec<f64>,
    /// Posterior variance per feature; zero for pruned entries.
    pub posterior_variances: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<FitWarning>,
}

impl SparseLinearModel {
    /// Model with every feature pruned.
    pub fn zero(dim: usize, prune_threshold: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            active: Vec::new(),
            relevance: vec![prune_threshold; dim],
            posterior_variances: vec![0.0; dim],
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
            warnings: vec![FitWarning::AllPruned],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn n_selected(&self) -> usize {
        self.active.len()
    }

    pub fn is_all_pruned(&self) -> bool {
        self.active.is_empty()
    }

    pub fn weight_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> Result<DVector<f64>> {
        if design.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} weights but design has {} columns",
                self.dim(),
                design.ncols()
            )));
        }
        let mut out = DVector::zeros(design.nrows());
        for &d in &self.active {
            out.axpy(self.weights[d], &design.column(d), 1.0);
        }
        Ok(out)
    }

    pub(crate) fn warn(&mut self, w: FitWarning) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        FitConfig::default().validate().unwrap();
        FitConfig::ls_ard_default().validate().unwrap();
        assert_eq!(FitConfig::default().prune_threshold, 1e6);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            FitConfig { kernel_bandwidth: 0.0, ..Default::default() },
            FitConfig { tol_w: -1.0, ..Default::default() },
            FitConfig { tol_fp: f64::NAN, ..Default::default() },
            FitConfig { prune_threshold: 1.0, ..Default::default() },
            FitConfig { jitter: -1e-3, ..Default::default() },
            FitConfig { max_outer_iters: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn zero_model_contract() {
        let m = SparseLinearModel::zero(4, 1e6);
        assert!(m.is_all_pruned());
        assert!(m.relevance.iter().all(|&a| a >= 1e6));
        let x = DMatrix::from_element(3, 4, 2.0);
        assert_eq!(m.predict(&x).unwrap(), DVector::zeros(3));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(weights in prop::collection::vec(-1e6f64..1e6, 1..20), scale in 1e-300f64..1e300) {
            let d = weights.len();
            let weights: Vec<f64> = weights.iter().map(|w| w * scale / 1e6).collect();
            let m = SparseLinearModel {
                active: (0..d).collect(),
                relevance: weights.iter().map(|w| 1.0 / (w * w + 1e-3)).collect(),
                posterior_variances: vec![0.125; d],
                weights,
                iterations: 3,
                converged: true,
                objective_trace: vec![-1.5, std::f64::consts::PI],
                warnings: vec![FitWarning::GaussNewtonFallback],
            };
            let back = SparseLinearModel::from_json(&m.to_json().unwrap()).unwrap();
            for (a, b) in m.weights.iter().zip(&back.weights) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back, m);
        }
    }
}
