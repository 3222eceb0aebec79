//! K-fold cross-validation of the kernel bandwidth `h` and, for MCC-L1, the
//! penalty `lambda`.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::prediction_metrics;
use crate::mcc_ard::fit_mcc_ard;
use crate::mcc_l1::{fit_mcc_l1, L1Config};
use crate::model::{FitConfig, SparseLinearModel};
use crate::rng::seeded_rng;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_H_MULTIPLIERS: [f64; 9] = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0];

/// Solver whose hyper-parameters are selected. The kernel bandwidth (and
/// penalty) inside the carried config are overwritten per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvSolver {
    MccArd(FitConfig),
    MccL1(L1Config),
}

impl CvSolver {
    fn fit(&self, ds: &Dataset, h: f64, lambda: Option<f64>) -> Result<SparseLinearModel> {
        match self {
            CvSolver::MccArd(cfg) => fit_mcc_ard(ds, &cfg.clone().with_bandwidth(h)),
            CvSolver::MccL1(cfg) => {
                let cfg = L1Config { kernel_bandwidth: h, lambda: lambda.unwrap_or(cfg.lambda), ..cfg.clone() };
                fit_mcc_l1(ds, &cfg)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScore {
    /// Correlation coefficient.
    #[default]
    R,
    /// Negated root mean squared error.
    NegRmse,
}

/// One row of the score table. `score` is `None` for a skipped fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub h: f64,
    pub lambda: Option<f64>,
    pub fold: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_h: f64,
    pub best_lambda: Option<f64>,
    /// Mean validation score of the selected grid point.
    pub best_score: f64,
    /// One row per (grid point, fold) in grid order.
    pub table: Vec<CvRow>,
    /// Folds whose correlation was skipped because the validation targets were constant.
    pub skipped_folds: usize,
}

impl CvResult {
    /// Writes the score table as CSV with columns `h, lambda, fold, score`.
    /// Missing values are written as empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["h", "lambda", "fold", "score"])?;
        for row in &self.table {
            w.write_record([
                row.h.to_string(),
                row.lambda.map(|l| l.to_string()).unwrap_or_default(),
                row.fold.to_string(),
                row.score.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fold label per sample: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut label = vec![0; n];
    for (i, &s) in order.iter().enumerate() {
        label[s] = i % folds;
    }
    label
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// `multipliers x Var(t)`, falling back to unit variance for constant targets.
pub fn default_h_grid(dataset: &Dataset) -> Vec<f64> {
    let var = population_variance(dataset.targets().as_slice());
    let scale = if var > 0.0 && var.is_finite() { var } else { 1.0 };
    DEFAULT_H_MULTIPLIERS.iter().map(|m| m * scale).collect()
}

/// `points` log-spaced values over `[1e-4, 1e1] x max|X^T t|`.
pub fn default_lambda_grid(dataset: &Dataset, points: usize) -> Vec<f64> {
    let lmax = dataset.design().tr_mul(dataset.targets()).amax();
    let scale = if lmax > 0.0 { lmax } else { 1.0 };
    let (lo, hi) = (1e-4f64.log10(), 1e1f64.log10());
    match points {
        0 => Vec::new(),
        1 => vec![scale * 10f64.powf(lo)],
        _ => (0..points).map(|i| scale * 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64)).collect(),
    }
}

/// Silverman's rule for the kernel bandwidth, returned in squared-error units.
/// Only meant as a starting point for a grid.
pub fn silverman_bandwidth(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::Empty("need at least two residuals"));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidConfig("residuals are constant".into()));
    }
    let sigma = 1.06 * sd * n.powf(-0.2);
    Ok(sigma * sigma)
}

fn fold_score(model: &SparseLinearModel, val: &Dataset, score: CvScore) -> Result<Option<f64>> {
    let pred = model.predict(val.design())?;
    let actual = val.targets();
    match score {
        CvScore::NegRmse => {
            let sse: f64 = pred.iter().zip(actual.iter()).map(|(p, a)| (p - a) * (p - a)).sum();
            Ok(Some(-(sse / actual.len() as f64).sqrt()))
        }
        CvScore::R => {
            if actual.len() < 2 || population_variance(actual.as_slice()) == 0.0 {
                return Ok(None);
            }
            // A constant prediction carries no correlation information; score it as zero.
            Ok(Some(prediction_metrics(pred.as_slice(), actual.as_slice())?.r.unwrap_or(0.0)))
        }
    }
}

fn mean_score(rows: &[CvRow]) -> f64 {
    let vals: Vec<f64> = rows.iter().filter_map(|r| r.score).collect();
    if vals.is_empty() {
        f64::NEG_INFINITY
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Selects `h` (and `lambda` for MCC-L1) by k-fold cross-validation on
/// `dataset` alone. Ties go to the larger `h`, then the larger `lambda`,
/// then the later grid point.
pub fn cv_select(
    dataset: &Dataset,
    solver: &CvSolver,
    h_grid: &[f64],
    lambda_grid: Option<&[f64]>,
    folds: usize,
    score: CvScore,
    seed: u64,
) -> Result<CvResult> {
    let n = dataset.n_samples();
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("folds must be at least 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidConfig(format!("{folds} folds requested for {n} samples")));
    }
    if h_grid.is_empty() || h_grid.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::InvalidConfig("h grid must be non-empty and positive".into()));
    }
    let grid: Vec<(f64, Option<f64>)> = match (solver, lambda_grid) {
        (CvSolver::MccArd(_), None) => h_grid.iter().map(|&h| (h, None)).collect(),
        (CvSolver::MccL1(_), Some(lg)) if !lg.is_empty() => {
            if lg.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
                return Err(Error::InvalidConfig("lambda grid must be non-negative".into()));
            }
            h_grid.iter().flat_map(|&h| lg.iter().map(move |&l| (h, Some(l)))).collect()
        }
        (CvSolver::MccArd(_), Some(_)) => {
            return Err(Error::InvalidConfig("lambda grid given for MCC-ARD".into()));
        }
        (CvSolver::MccL1(_), _) => {
            return Err(Error::InvalidConfig("MCC-L1 needs a non-empty lambda grid".into()));
        }
    };

    let labels = fold_assignment(n, folds, seed);
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != k).collect();
            let val: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
            (dataset.select_rows(&train), dataset.select_rows(&val))
        })
        .collect();

    let per_point: Vec<Vec<CvRow>> = grid
        .par_iter()
        .map(|&(h, lambda)| {
            splits
                .iter()
                .enumerate()
                .map(|(fold, (tr, va))| {
                    let score = match solver.fit(tr, h, lambda).and_then(|m| fold_score(&m, va, score)) {
                        Ok(s) => s,
                        Err(e) => {
                            log::warn!("CV fit failed at h = {h}, lambda = {lambda:?}, fold {fold}: {e}");
                            None
                        }
                    };
                    CvRow { h, lambda, fold, score }
                })
                .collect()
        })
        .collect();

    let skipped_folds = match score {
        CvScore::R => splits.iter().filter(|(_, va)| va.n_samples() < 2 || population_variance(va.targets().as_slice()) == 0.0).count(),
        CvScore::NegRmse => 0,
    };
    if skipped_folds > 0 {
        log::warn!("{skipped_folds} validation folds have constant targets; their correlation is skipped");
    }

    let key = |i: usize| (mean_score(&per_point[i]), grid[i].0, grid[i].1.unwrap_or(0.0), i);
    let best = (0..grid.len())
        .max_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.cmp(&kb.3))
        })
        .unwrap_or(0);

    Ok(CvResult {
        best_h: grid[best].0,
        best_lambda: grid[best].1,
        best_score: mean_score(&per_point[best]),
        table: per_point.into_iter().flatten().collect(),
        skipped_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, NoiseSpec, ScenarioSpec};

    fn clean_data(seed: u64) -> Dataset {
        let spec = ScenarioSpec { n_train: 60, n_test: 10, dim: 8, n_relevant: 3, noise: NoiseSpec::new(0.05, 5.0, 0.0).unwrap(), seed };
        generate(&spec).unwrap().0
    }

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let a = fold_assignment(23, 5, 9);
        assert_eq!(a, fold_assignment(23, 5, 9));
        for k in 0..5 {
            let c = a.iter().filter(|&&l| l == k).count();
            assert!(c == 4 || c == 5);
        }
        assert_ne!(a, fold_assignment(23, 5, 10));
    }

    #[test]
    fn single_point_grid() {
        let ds = clean_data(1);
        let res = cv_select(&ds, &CvSolver::MccArd(FitConfig::default()), &[0.7], None, 3, CvScore::R, 0).unwrap();
        assert_eq!(res.best_h, 0.7);
        assert_eq!(res.table.len(), 3);
    }

    #[test]
    fn identical_points_tie_to_later() {
        let ds = clean_data(2);
        let solver = CvSolver::MccL1(L1Config::default());
        let res = cv_select(&ds, &solver, &[1.0, 1.0], Some(&[0.5, 0.5]), 3, CvScore::NegRmse, 0).unwrap();
        assert_eq!(res.best_h, 1.0);
        assert_eq!(res.best_lambda, Some(0.5));
        assert_eq!(res.table.len(), 12);
    }

    #[test]
    fn clean_data_avoids_smallest_bandwidth() {
        let ds = clean_data(3);
        let grid = default_h_grid(&ds);
        let res = cv_select(&ds, &CvSolver::MccArd(FitConfig::default()), &grid, None, 5, CvScore::R, 1).unwrap();
        assert!(res.best_h > grid[0], "selected {}", res.best_h);
    }

    #[test]
    fn argument_contracts() {
        let ds = clean_data(4);
        let ard = CvSolver::MccArd(FitConfig::default());
        assert!(cv_select(&ds, &ard, &[1.0], None, 1, CvScore::R, 0).is_err());
        assert!(cv_select(&ds, &ard, &[], None, 3, CvScore::R, 0).is_err());
        assert!(cv_select(&ds, &ard, &[1.0], Some(&[0.1]), 3, CvScore::R, 0).is_err());
        assert!(cv_select(&ds, &CvSolver::MccL1(L1Config::default()), &[1.0], None, 3, CvScore::R, 0).is_err());
    }

    #[test]
    fn constant_targets_skip_correlation() {
        let ds = Dataset::from_rows(&(0..10).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>(), &[2.0; 10]).unwrap();
        let res = cv_select(&ds, &CvSolver::MccArd(FitConfig::default()), &[1.0, 2.0], None, 2, CvScore::R, 0).unwrap();
        assert_eq!(res.skipped_folds, 2);
        assert!(res.table.iter().all(|r| r.score.is_none()));
        assert_eq!(res.best_h, 2.0);
    }

    #[test]
    fn score_table_csv() {
        let ds = clean_data(5);
        let res = cv_select(&ds, &CvSolver::MccArd(FitConfig::default()), &[0.5, 1.0], None, 2, CvScore::NegRmse, 0).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("h,lambda,fold,score"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn default_grids() {
        let ds = clean_data(6);
        let lg = default_lambda_grid(&ds, 8);
        assert_eq!(lg.len(), 8);
        let lmax = ds.design().tr_mul(ds.targets()).amax();
        assert!((lg[0] / lmax - 1e-4).abs() < 1e-16);
        assert!((lg[7] / lmax - 10.0).abs() < 1e-12);
        assert_eq!(default_h_grid(&ds).len(), 9);
        let h = silverman_bandwidth(&[1.0, -1.0, 2.0, 0.0]).unwrap();
        assert!(h > 0.0);
    }
}
