use mccard::correntropy::{empirical_correntropy, log_likelihood};
use mccard::ls_ard::{log_marginal_likelihood, posterior};
use mccard::mcc_ard::{fit_mcc_ard_with_diagnostics, fixed_point_weights, log_q_w, negative_hessian, negative_hessian_for};
use mccard::mcc_l1::fit_mcc_l1_with_diagnostics;
use mccard::{fit_ls_ard, Dataset, FitConfig, KernelBandwidth, L1Config, LikelihoodVariant};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;
use common::*;

#[test]
fn log_q_matches_definition() {
    let ds = instance(15, 4, 0.5, 1);
    let w = [0.3, -0.2, 1.0, 0.0];
    let a = [1.0, 2.0, 0.5, 3.0];
    let got = log_q_w(&ds, &w, &a, KernelBandwidth::new(0.7).unwrap(), LikelihoodVariant::Deviant).unwrap();
    assert!((got - oracle_log_q(&ds, &w, &a, 0.7)).abs() < 1e-12 * got.abs().max(1.0));
}

#[test]
fn hessian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for inst in 0..5 {
        let ds = instance(20, 4, 0.3, 100 + inst);
        let h: f64 = rng.random_range(0.5..3.0);
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
        for _ in 0..10 {
            let w: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let analytic = negative_hessian(&ds, &w, &a, KernelBandwidth::new(h).unwrap()).unwrap();
            let fd = fd_negative_hessian(&ds, &w, &a, h, 1e-4);
            let rel = (&analytic - &fd).norm() / analytic.norm();
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }
}

#[test]
fn proper_hessian_matches_finite_differences() {
    let ds = instance(12, 3, 0.5, 7);
    let h = 1.3;
    let a = [0.5, 1.0, 2.0];
    let bw = KernelBandwidth::new(h).unwrap();
    let f = |v: &[f64]| log_q_w(&ds, v, &a, bw, LikelihoodVariant::Proper).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let w: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let analytic = negative_hessian_for(&ds, &w, &a, bw, LikelihoodVariant::Proper).unwrap();
        let eps = 1e-4;
        let fd = DMatrix::from_fn(3, 3, |i, j| {
            let at = |si: f64, sj: f64| {
                let mut p = w.clone();
                p[i] += si * eps;
                p[j] += sj * eps;
                f(&p)
            };
            -(at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * eps * eps)
        });
        assert!((&analytic - &fd).norm() / analytic.norm() < 1e-5);
    }
}

/// Plain gradient ascent with backtracking, run to a tiny gradient norm.
fn gradient_ascent_mode(ds: &Dataset, a: &[f64], h: f64) -> Vec<f64> {
    let mut w = vec![0.0; a.len()];
    let mut step = 1.0;
    for _ in 0..200_000 {
        let g = oracle_gradient(ds, &w, a, h);
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-13 {
            break;
        }
        let f0 = oracle_log_q(ds, &w, a, h);
        loop {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi + step * gi).collect();
            if oracle_log_q(ds, &cand, a, h) >= f0 + 0.5 * step * gn * gn || step < 1e-14 {
                w = cand;
                break;
            }
            step *= 0.5;
        }
        step *= 2.0;
    }
    w
}

#[test]
fn fixed_point_matches_gradient_ascent() {
    for seed in 0..3 {
        let ds = instance(40, 3, 0.2, 200 + seed);
        let a = [0.5, 1.0, 2.0];
        let h = 2.0;
        let fp = fixed_point_weights(&ds, &a, KernelBandwidth::new(h).unwrap(), &[0.0; 3], 10_000, 1e-14).unwrap();
        let oracle = gradient_ascent_mode(&ds, &a, h);
        for (x, y) in fp.weights.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn gaussian_posterior_matches_ridge_formula() {
    let ds = instance(25, 6, 0.4, 3);
    let a = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let s2 = 0.3;
    let post = posterior(&ds, &a, s2).unwrap();
    let x = ds.design();
    let prec = x.transpose() * x / s2 + DMatrix::from_diagonal(&DVector::from_column_slice(&a));
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * x.transpose() * ds.targets() / s2;
    assert!((&post.mean - &mean).amax() < 1e-10);
    assert!((&post.covariance - &cov).amax() < 1e-10);
}

#[test]
fn evidence_matches_dense_gaussian() {
    let ds = instance(10, 4, 0.4, 4);
    let a = [0.5, 1.0, 2.0, 4.0];
    let s2 = 0.2;
    let x = ds.design();
    let c = DMatrix::<f64>::identity(10, 10) * s2
        + x * DMatrix::from_diagonal(&DVector::from_column_slice(&a).map(|v| 1.0 / v)) * x.transpose();
    let chol = c.clone().cholesky().unwrap();
    let t = ds.targets();
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let quad = t.dot(&chol.solve(t));
    let expected = -0.5 * (10.0 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    let got = log_marginal_likelihood(&ds, &a, s2).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0));
}

#[test]
fn deviant_inner_iteration_is_mostly_monotone() {
    let mut ascent = 0;
    let mut total = 0;
    for seed in 0..10 {
        let ds = instance(60, 30, 0.5, 300 + seed);
        let (_, diag) = fit_mcc_ard_with_diagnostics(&ds, &FitConfig::default().with_bandwidth(2.0)).unwrap();
        ascent += diag.inner_ascent_steps;
        total += diag.inner_steps;
    }
    assert!(total > 0);
    assert!(ascent as f64 >= 0.95 * total as f64, "{ascent}/{total} ascent steps");
}

#[test]
fn ls_ard_evidence_never_below_start() {
    for seed in 0..10 {
        let ds = instance(40, 15, 0.3, 400 + seed);
        let m = fit_ls_ard(&ds, &FitConfig::ls_ard_default()).unwrap();
        assert!(m.objective_trace.last().unwrap() >= m.objective_trace.first().unwrap());
    }
}

#[test]
fn lasso_sweeps_never_increase_objective() {
    for seed in 0..5 {
        let ds = instance(30, 50, 1.0, 500 + seed);
        let cfg = L1Config { kernel_bandwidth: 3.0, lambda: 0.3, ..Default::default() };
        let (_, diag) = fit_mcc_l1_with_diagnostics(&ds, &cfg).unwrap();
        for path in diag.m_step_paths {
            for p in path.windows(2) {
                assert!(p[1] <= p[0] + 1e-12 * p[0].abs());
            }
        }
    }
}

#[test]
fn correntropy_identity_on_random_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(1..100);
        let e: Vec<f64> = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let zeros = vec![0.0; n];
        let h = KernelBandwidth::new(rng.random_range(0.1..5.0)).unwrap();
        let ll = log_likelihood(&e, h, LikelihoodVariant::Deviant).unwrap();
        let vc = empirical_correntropy(&e, &zeros, h).unwrap();
        assert!((ll - n as f64 * vc).abs() < 1e-12 * (n as f64).max(1.0));
    }
}
