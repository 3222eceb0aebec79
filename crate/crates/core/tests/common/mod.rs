#![allow(dead_code)]

use mccard::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn instance(n: usize, d: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t = &x * &w + DVector::from_fn(n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
    Dataset::new(x, t).unwrap()
}

/// Deviant log Q_w written straight from its definition.
pub fn oracle_log_q(ds: &Dataset, w: &[f64], a: &[f64], h: f64) -> f64 {
    let (x, t) = (ds.design(), ds.targets());
    let mut total = 0.0;
    for n in 0..x.nrows() {
        let mut pred = 0.0;
        for d in 0..x.ncols() {
            pred += x[(n, d)] * w[d];
        }
        let e = t[n] - pred;
        total += (-e * e / (2.0 * h)).exp();
    }
    for d in 0..w.len() {
        total -= 0.5 * a[d] * w[d] * w[d];
    }
    total
}

pub fn oracle_gradient(ds: &Dataset, w: &[f64], a: &[f64], h: f64) -> Vec<f64> {
    let (x, t) = (ds.design(), ds.targets());
    let mut g: Vec<f64> = (0..w.len()).map(|d| -a[d] * w[d]).collect();
    for n in 0..x.nrows() {
        let pred: f64 = (0..x.ncols()).map(|d| x[(n, d)] * w[d]).sum();
        let e = t[n] - pred;
        let k = (-e * e / (2.0 * h)).exp();
        for d in 0..w.len() {
            g[d] += k * e * x[(n, d)] / h;
        }
    }
    g
}

pub fn fd_negative_hessian(ds: &Dataset, w: &[f64], a: &[f64], h: f64, eps: f64) -> DMatrix<f64> {
    let d = w.len();
    let f = |v: &[f64]| oracle_log_q(ds, v, a, h);
    DMatrix::from_fn(d, d, |i, j| {
        let mut p = w.to_vec();
        let mut at = |si: f64, sj: f64| {
            p.copy_from_slice(w);
            p[i] += si * eps;
            p[j] += sj * eps;
            f(&p)
        };
        let second = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * eps * eps);
        -second
    })
}
