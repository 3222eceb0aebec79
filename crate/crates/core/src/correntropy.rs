//! Correntropy primitives: the Gaussian kernel, empirical correntropy, and the
//! two correntropy-aware noise densities.
//!
//! The bandwidth `h` is in squared-error units: `k(a, b) = exp(-(a - b)^2 / (2h))`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LikelihoodVariant;

/// Strictly positive Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KernelBandwidth(f64);

impl KernelBandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidConfig(format!("kernel bandwidth must be finite and positive, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for KernelBandwidth {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<KernelBandwidth> for f64 {
    fn from(h: KernelBandwidth) -> f64 {
        h.0
    }
}

/// Kernel value for a residual `e`, i.e. `exp(-e^2 / 2h)`.
#[inline]
pub(crate) fn kernel_of_residual(e: f64, h: f64) -> f64 {
    (-e * e / (2.0 * h)).exp()
}

pub fn gaussian_kernel(a: f64, b: f64, h: KernelBandwidth) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(kernel_of_residual(a - b, h.get()))
}

/// Sample estimate of correntropy between two equal-length vectors.
pub fn empirical_correntropy(a: &[f64], b: &[f64], h: KernelBandwidth) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("correntropy input"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correntropy input"));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| kernel_of_residual(x - y, h.get())).sum();
    Ok(sum / a.len() as f64)
}

/// Correntropy-aware noise density evaluated at residual `e`.
pub fn noise_density(e: f64, h: KernelBandwidth, variant: LikelihoodVariant) -> Result<f64> {
    if !e.is_finite() {
        return Err(Error::NonFinite("residual"));
    }
    let k = kernel_of_residual(e, h.get());
    Ok(match variant {
        LikelihoodVariant::Deviant => k.exp(),
        LikelihoodVariant::Proper => k.exp_m1(),
    })
}

/// `log(exp(k) - 1)` for `k = exp(-e^2 / 2h)`, computed without cancellation.
///
/// Uses `log(expm1(k)) = log k + log(expm1(k) / k)` so the far tail reduces
/// to the exact Gaussian term `-e^2 / 2h` even after `k` underflows.
#[inline]
pub(crate) fn proper_log_density(e: f64, h: f64) -> f64 {
    let log_k = -e * e / (2.0 * h);
    let k = log_k.exp();
    let ratio = if k == 0.0 { 1.0 } else { k.exp_m1() / k };
    log_k + ratio.ln()
}

/// Per-sample log-likelihood term for residual `e`.
#[inline]
pub(crate) fn log_density_term(e: f64, h: f64, variant: LikelihoodVariant) -> f64 {
    match variant {
        LikelihoodVariant::Deviant => kernel_of_residual(e, h),
        LikelihoodVariant::Proper => proper_log_density(e, h),
    }
}

/// Log-likelihood of a residual vector under the chosen noise density
/// (additive constants dropped for the deviant form).
pub fn log_likelihood(residuals: &[f64], h: KernelBandwidth, variant: LikelihoodVariant) -> Result<f64> {
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residuals"));
    }
    Ok(residuals.iter().map(|&e| log_density_term(e, h.get(), variant)).sum())
}

/// `q = k / (1 - exp(-k))`, the proper-variant analogue of the kernel weight.
/// Tends to 1 as `k -> 0`.
#[inline]
pub(crate) fn proper_weight(k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        k / -(-k).exp_m1()
    }
}

/// Per-sample derivative information of the log-likelihood term.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ResidualCurvature {
    /// Weight `omega` such that `d/de log p(e) = -(e / h) * omega`.
    pub weight: f64,
    /// `-d^2/de^2 log p(e)`, possibly negative.
    pub curvature: f64,
}

pub(crate) fn residual_curvature(e: f64, h: f64, variant: LikelihoodVariant) -> ResidualCurvature {
    let k = kernel_of_residual(e, h);
    let e2h = e * e / h;
    match variant {
        LikelihoodVariant::Deviant => ResidualCurvature { weight: k, curvature: -(k / h) * (e2h - 1.0) },
        LikelihoodVariant::Proper => {
            let q = proper_weight(k);
            // l'' = -q (q - k) e^2 / h^2 + (q / h)(e^2 / h - 1)
            let second = -q * (q - k) * e2h / h + (q / h) * (e2h - 1.0);
            ResidualCurvature { weight: q, curvature: -second }
        }
    }
}

/// Residuals `t - X w`.
pub(crate) fn residuals(design: &nalgebra::DMatrix<f64>, targets: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    targets - design * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn h(v: f64) -> KernelBandwidth {
        KernelBandwidth::new(v).unwrap()
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelBandwidth::new(0.0).is_err());
        assert!(KernelBandwidth::new(-1.0).is_err());
        assert!(KernelBandwidth::new(f64::INFINITY).is_err());
        assert!(serde_json::from_str::<KernelBandwidth>("-2.0").is_err());
        assert_eq!(serde_json::from_str::<KernelBandwidth>("2.5").unwrap().get(), 2.5);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(3.0, 3.0, h(1.0)).unwrap(), 1.0);
        let v = gaussian_kernel(1.0, 0.0, h(0.5)).unwrap();
        assert!((v - 0.36787944117144233).abs() < 1e-15);
        assert!(gaussian_kernel(f64::NAN, 0.0, h(1.0)).is_err());
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (a, b): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let bw = h(rng.random_range(0.01..5.0));
            assert_eq!(gaussian_kernel(a, b, bw).unwrap(), gaussian_kernel(b, a, bw).unwrap());
        }
    }

    #[test]
    fn correntropy_values() {
        let a = [0.3, -1.0, 2.0, 7.5];
        assert_eq!(empirical_correntropy(&a, &a, h(0.7)).unwrap(), 1.0);
        let hv = 0.8;
        let v = empirical_correntropy(&[0.0, 0.0], &[0.0, (2.0 * hv as f64).sqrt()], h(hv)).unwrap();
        assert!((v - 0.6839397205857212).abs() < 1e-15);
        assert!(matches!(empirical_correntropy(&[1.0], &[1.0, 2.0], h(1.0)), Err(Error::DimensionMismatch(_))));
        assert!(matches!(empirical_correntropy(&[], &[], h(1.0)), Err(Error::Empty(_))));
    }

    #[test]
    fn correntropy_matches_naive_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hv = 0.9;
        let mut naive = 0.0;
        for i in 0..1000 {
            let d = a[i] - b[i];
            naive += (-(d * d) / (2.0 * hv)).exp();
        }
        naive /= 1000.0;
        let v = empirical_correntropy(&a, &b, h(hv)).unwrap();
        assert!((v - naive).abs() < 1e-12);
    }

    #[test]
    fn noise_density_values_and_limits() {
        use LikelihoodVariant::*;
        let e0 = noise_density(0.0, h(1.0), Deviant).unwrap();
        assert!((e0 - std::f64::consts::E).abs() < 1e-15);
        let hv = 0.6;
        let at = noise_density((2.0 * hv as f64).sqrt(), h(hv), Deviant).unwrap();
        assert!((at - 1.444667861009766).abs() < 1e-14);
        assert_eq!(noise_density(1e6, h(1.0), Deviant).unwrap(), 1.0);
        assert_eq!(noise_density(1e6, h(1.0), Proper).unwrap(), 0.0);
        assert!(noise_density(f64::INFINITY, h(1.0), Proper).is_err());
    }

    #[test]
    fn log_likelihood_values() {
        use LikelihoodVariant::*;
        assert_eq!(log_likelihood(&[0.0; 5], h(2.0), Deviant).unwrap(), 5.0);
        let v = log_likelihood(&[0.0], h(2.0), Proper).unwrap();
        assert!((v - 0.541324854612918).abs() < 1e-14);
        // Far tail stays finite and matches the Gaussian term.
        let far = log_likelihood(&[100.0], h(1.0), Proper).unwrap();
        assert!((far + 5000.0).abs() < 1e-9);
    }

    #[test]
    fn deviant_log_likelihood_is_n_times_correntropy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let bw = h(rng.random_range(0.05..4.0));
            let ll = log_likelihood(&e, bw, LikelihoodVariant::Deviant).unwrap();
            let v = empirical_correntropy(&e, &vec![0.0; n], bw).unwrap();
            assert!((ll - n as f64 * v).abs() < 1e-12 * n as f64);
        }
    }

    /// Composite Simpson's rule on `[-half_width, half_width]`.
    fn simpson(f: impl Fn(f64) -> f64, half_width: f64, intervals: usize) -> f64 {
        let step = 2.0 * half_width / intervals as f64;
        let mut acc = f(-half_width) + f(half_width);
        for i in 1..intervals {
            let x = -half_width + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn proper_density_is_normalizable_and_deviant_is_not() {
        let hv = 0.7;
        let bw = h(hv);
        let proper = |e: f64| noise_density(e, bw, LikelihoodVariant::Proper).unwrap();
        let deviant = |e: f64| noise_density(e, bw, LikelihoodVariant::Deviant).unwrap();
        let s = hv.sqrt();
        let p50 = simpson(proper, 50.0 * s, 200_000);
        let p100 = simpson(proper, 100.0 * s, 400_000);
        assert!(p50.is_finite() && p50 > 0.0);
        assert!((p100 - p50).abs() < 1e-10 * p50);
        let d50 = simpson(deviant, 50.0 * s, 200_000);
        let d100 = simpson(deviant, 100.0 * s, 400_000);
        // The deviant integral grows by the extra interval length (density -> 1).
        assert!(((d100 - d50) - 100.0 * s).abs() < 1e-6 * d100);
    }

    #[test]
    fn curvature_matches_finite_differences() {
        for variant in [LikelihoodVariant::Deviant, LikelihoodVariant::Proper] {
            for &(e, hv) in &[(0.0, 1.0), (0.3, 0.5), (-1.7, 2.0), (4.0, 0.8), (30.0, 1.0)] {
                let f = |x: f64| log_density_term(x, hv, variant);
                let step = 1e-4;
                let d1 = (f(e + step) - f(e - step)) / (2.0 * step);
                let d2 = (f(e + step) - 2.0 * f(e) + f(e - step)) / (step * step);
                let c = residual_curvature(e, hv, variant);
                assert!((d1 + e / hv * c.weight).abs() < 1e-6 * (1.0 + d1.abs()), "{variant:?} e={e}");
                assert!((d2 + c.curvature).abs() < 1e-4 * (1.0 + d2.abs()), "{variant:?} e={e}");
            }
        }
    }

    proptest! {
        #[test]
        fn density_even_and_decreasing(e in 0.0f64..8.0, de in 1e-3f64..2.0, hv in 0.05f64..5.0) {
            for variant in [LikelihoodVariant::Deviant, LikelihoodVariant::Proper] {
                let p = noise_density(e, h(hv), variant).unwrap();
                let m = noise_density(-e, h(hv), variant).unwrap();
                prop_assert_eq!(p, m);
                let further = noise_density(e + de, h(hv), variant).unwrap();
                let kernel_moved = kernel_of_residual(e, hv) - kernel_of_residual(e + de, hv) > 1e-12;
                if kernel_moved {
                    prop_assert!(further < p);
                } else {
                    prop_assert!(further <= p);
                }
            }
        }

        #[test]
        fn deviant_minus_proper_is_one(e in -20.0f64..20.0, hv in 0.01f64..10.0) {
            let d = noise_density(e, h(hv), LikelihoodVariant::Deviant).unwrap();
            let p = noise_density(e, h(hv), LikelihoodVariant::Proper).unwrap();
            prop_assert!((d - p - 1.0).abs() < 4.0 * f64::EPSILON * d);
        }
    }
}
