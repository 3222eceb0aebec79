//! Factorizations of ARD precision matrices `P = X^T diag(c) X + diag(a)`.
//!
//! `c` holds per-sample weights (possibly negative, as in the exact
//! correntropy Hessian) and `a` per-feature prior precisions (strictly
//! positive). When there are more features than samples the system is solved
//! in sample space through the Woodbury identity
//!
//! ```text
//! P^-1 = A^-1 - A^-1 Z^T M^-1 Z A^-1,   Z = diag(sqrt|c|) X,   M = G + Z A^-1 Z^T
//! ```
//!
//! with `G = diag(sign c)`. `P` is positive definite exactly when `M` has as
//! many negative eigenvalues as `G` has negative entries (Haynsworth inertia).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

enum Factor {
    PrimalCholesky(Cholesky<f64, Dyn>),
    PrimalEigen(SymmetricEigen<f64, Dyn>),
    DualCholesky { z: DMatrix<f64>, chol: Cholesky<f64, Dyn> },
    DualEigen { z: DMatrix<f64>, eig: SymmetricEigen<f64, Dyn> },
}

pub(crate) struct PrecisionSystem {
    factor: Factor,
    prior: DVector<f64>,
    positive_definite: bool,
}

/// Relative eigenvalue magnitude below which an indefinite system is declared singular.
const EIGEN_RCOND: f64 = 1e-13;

fn scale_rows(x: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col.component_mul_assign(s);
    }
    out
}

fn check_eigen(eig: &SymmetricEigen<f64, Dyn>, context: &'static str) -> Result<()> {
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !max.is_finite() || eig.eigenvalues.iter().any(|v| v.abs() <= EIGEN_RCOND * max) {
        return Err(Error::Singular(context));
    }
    Ok(())
}

impl PrecisionSystem {
    /// Factorizes `X^T diag(c) X + diag(a + jitter)`.
    pub fn new(x: &DMatrix<f64>, c: &DVector<f64>, a: &DVector<f64>, jitter: f64) -> Result<Self> {
        let (n, d) = x.shape();
        debug_assert_eq!(c.len(), n);
        debug_assert_eq!(a.len(), d);
        if c.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("precision system weights"));
        }
        let prior = a.map(|v| v + jitter);
        if prior.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig("prior precisions must be positive".into()));
        }
        let signed = c.iter().any(|&v| v < 0.0);

        if d <= n {
            let mut p = x.tr_mul(&scale_rows(x, c));
            p = (&p + p.transpose()) * 0.5;
            for i in 0..d {
                p[(i, i)] += prior[i];
            }
            if let Some(chol) = Cholesky::new(p.clone()) {
                return Ok(Self { factor: Factor::PrimalCholesky(chol), prior, positive_definite: true });
            }
            if !signed {
                // Positive definite in exact arithmetic; nudge the diagonal once.
                let bump = 1e-10 * p.diagonal().amax().max(1.0);
                for i in 0..d {
                    p[(i, i)] += bump;
                }
                let chol = Cholesky::new(p).ok_or(Error::Singular("precision matrix"))?;
                return Ok(Self { factor: Factor::PrimalCholesky(chol), prior, positive_definite: true });
            }
            let eig = SymmetricEigen::new(p);
            check_eigen(&eig, "indefinite precision matrix")?;
            let positive_definite = eig.eigenvalues.iter().all(|&v| v > 0.0);
            return Ok(Self { factor: Factor::PrimalEigen(eig), prior, positive_definite });
        }

        let s = c.map(|v| v.abs().sqrt());
        let z = scale_rows(x, &s);
        let mut za = z.clone();
        for (mut col, &ad) in za.column_iter_mut().zip(prior.iter()) {
            col /= ad;
        }
        let mut m = &za * z.transpose();
        m = (&m + m.transpose()) * 0.5;
        let mut n_negative_weights = 0usize;
        for i in 0..n {
            if c[i] < 0.0 {
                m[(i, i)] -= 1.0;
                n_negative_weights += 1;
            } else {
                m[(i, i)] += 1.0;
            }
        }
        if !signed {
            let chol = Cholesky::new(m).ok_or(Error::Singular("dual precision matrix"))?;
            return Ok(Self { factor: Factor::DualCholesky { z, chol }, prior, positive_definite: true });
        }
        let eig = SymmetricEigen::new(m);
        check_eigen(&eig, "indefinite dual precision matrix")?;
        let n_negative_eigen = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let positive_definite = n_negative_eigen == n_negative_weights;
        Ok(Self { factor: Factor::DualEigen { z, eig }, prior, positive_definite })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    /// `P^-1 b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::PrimalCholesky(chol) => chol.solve(b),
            Factor::PrimalEigen(eig) => {
                let mut proj = eig.eigenvectors.tr_mul(b);
                proj.component_div_assign(&eig.eigenvalues);
                &eig.eigenvectors * proj
            }
            Factor::DualCholesky { z, chol } => {
                let ainv_b = b.component_div(&self.prior);
                let inner = chol.solve(&(z * &ainv_b));
                ainv_b - z.tr_mul(&inner).component_div(&self.prior)
            }
            Factor::DualEigen { z, eig } => {
                let ainv_b = b.component_div(&self.prior);
                let mut proj = eig.eigenvectors.tr_mul(&(z * &ainv_b));
                proj.component_div_assign(&eig.eigenvalues);
                let inner = &eig.eigenvectors * proj;
                ainv_b - z.tr_mul(&inner).component_div(&self.prior)
            }
        }
    }

    /// Diagonal of `P^-1`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        match &self.factor {
            Factor::PrimalCholesky(chol) => {
                let d = self.prior.len();
                let l = chol.l();
                let linv = l
                    .solve_lower_triangular(&DMatrix::identity(d, d))
                    .expect("Cholesky factor has a positive diagonal");
                DVector::from_fn(d, |j, _| linv.column(j).norm_squared())
            }
            Factor::PrimalEigen(eig) => {
                let v = &eig.eigenvectors;
                DVector::from_fn(v.nrows(), |i, _| {
                    v.row(i).iter().zip(eig.eigenvalues.iter()).map(|(x, l)| x * x / l).sum()
                })
            }
            Factor::DualCholesky { z, chol } => {
                let w = chol.l().solve_lower_triangular(z).expect("Cholesky factor has a positive diagonal");
                DVector::from_fn(self.prior.len(), |j, _| {
                    let a = self.prior[j];
                    1.0 / a - w.column(j).norm_squared() / (a * a)
                })
            }
            Factor::DualEigen { z, eig } => {
                let p = eig.eigenvectors.tr_mul(z);
                DVector::from_fn(self.prior.len(), |j, _| {
                    let a = self.prior[j];
                    let quad: f64 = p.column(j).iter().zip(eig.eigenvalues.iter()).map(|(x, l)| x * x / l).sum();
                    1.0 / a - quad / (a * a)
                })
            }
        }
    }

    /// Full `P^-1`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let d = self.prior.len();
        let inv = match &self.factor {
            Factor::PrimalCholesky(chol) => chol.inverse(),
            _ => {
                let mut out = DMatrix::zeros(d, d);
                for j in 0..d {
                    let mut e = DVector::zeros(d);
                    e[j] = 1.0;
                    out.set_column(j, &self.solve(&e));
                }
                out
            }
        };
        (&inv + inv.transpose()) * 0.5
    }
}

/// `X^T diag(c) y`.
pub(crate) fn weighted_xty(x: &DMatrix<f64>, c: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.tr_mul(&c.component_mul(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, d: usize, seed: u64, signed: bool) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let lo = if signed { -0.05 } else { 0.0 };
        let c = DVector::from_fn(n, |_, _| rng.random_range(lo..1.0));
        let a = DVector::from_fn(d, |_, _| rng.random_range(0.5..3.0));
        (x, c, a)
    }

    fn dense(x: &DMatrix<f64>, c: &DVector<f64>, a: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(x.ncols(), x.ncols());
        for n in 0..x.nrows() {
            let row = x.row(n);
            p += row.transpose() * row * c[n];
        }
        for i in 0..a.len() {
            p[(i, i)] += a[i];
        }
        p
    }

    #[test]
    fn primal_and_dual_agree_with_dense_inverse() {
        for &(n, d, signed) in &[(30, 6, false), (6, 30, false), (30, 6, true), (8, 25, true)] {
            let (x, c, a) = random(n, d, (n * 100 + d) as u64, signed);
            let sys = PrecisionSystem::new(&x, &c, &a, 0.0).unwrap();
            let reference = dense(&x, &c, &a).lu().try_inverse().unwrap();
            let inv = sys.inverse();
            assert!((&inv - &reference).amax() < 1e-9 * reference.amax(), "n={n} d={d}");
            let diag = sys.inverse_diagonal();
            assert!((diag - reference.diagonal()).amax() < 1e-9 * reference.amax());
            let b = DVector::from_fn(d, |i, _| (i as f64).sin());
            assert!((sys.solve(&b) - &reference * &b).amax() < 1e-9 * reference.amax());
        }
    }

    #[test]
    fn definiteness_detected_in_both_routes() {
        for &(n, d) in &[(12, 4), (4, 12)] {
            let (x, mut c, a) = random(n, d, 9, false);
            assert!(PrecisionSystem::new(&x, &c, &a, 0.0).unwrap().is_positive_definite());
            c.iter_mut().for_each(|v| *v = -20.0 * *v - 1.0);
            let sys = PrecisionSystem::new(&x, &c, &a, 0.0).unwrap();
            let eig = SymmetricEigen::new(dense(&x, &c, &a));
            assert_eq!(sys.is_positive_definite(), eig.eigenvalues.iter().all(|&v| v > 0.0));
            assert!(!sys.is_positive_definite());
        }
    }
}
