//! Python bindings: datasets, the three solvers, the synthetic generator,
//! metrics and cross-validation.

use std::path::PathBuf;

use mccard::eval::{evaluate as eval_model, prediction_metrics as metrics};
use mccard::model_selection::{cv_select as cv, default_h_grid, default_lambda_grid, CvScore, CvSolver};
use mccard::synthgen::{generate as gen, NoiseSpec, ScenarioSpec};
use mccard::{FitConfig, HessianMode, L1Config, LikelihoodVariant};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: mccard::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_variant(s: &str) -> PyResult<LikelihoodVariant> {
    match s {
        "deviant" => Ok(LikelihoodVariant::Deviant),
        "proper" => Ok(LikelihoodVariant::Proper),
        _ => Err(PyValueError::new_err(format!("unknown variant '{s}' (expected 'deviant' or 'proper')"))),
    }
}

fn parse_hessian(s: &str) -> PyResult<HessianMode> {
    match s {
        "exact" => Ok(HessianMode::Exact),
        "gauss_newton" => Ok(HessianMode::GaussNewton),
        "auto" => Ok(HessianMode::Auto),
        _ => Err(PyValueError::new_err(format!("unknown hessian mode '{s}'"))),
    }
}

fn parse_score(s: &str) -> PyResult<CvScore> {
    match s {
        "r" => Ok(CvScore::R),
        "neg_rmse" => Ok(CvScore::NegRmse),
        _ => Err(PyValueError::new_err(format!("unknown score '{s}' (expected 'r' or 'neg_rmse')"))),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Design matrix, targets and optional ground-truth weights.
#[pyclass(name = "Dataset", module = "pymccard")]
pub struct PyDataset {
    inner: mccard::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (design, targets, truth = None))]
    fn new(design: Vec<Vec<f64>>, targets: Vec<f64>, truth: Option<Vec<f64>>) -> PyResult<Self> {
        let mut ds = mccard::Dataset::new(matrix_from_rows(&design)?, DVector::from_vec(targets)).map_err(py_err)?;
        if let Some(t) = truth {
            ds = ds.with_truth(DVector::from_vec(t)).map_err(py_err)?;
        }
        Ok(Self { inner: ds })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: mccard::Dataset::load(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn design(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.design())
    }

    #[getter]
    fn targets(&self) -> Vec<f64> {
        self.inner.targets().as_slice().to_vec()
    }

    #[getter]
    fn truth(&self) -> Option<Vec<f64>> {
        self.inner.truth().map(|t| t.as_slice().to_vec())
    }

    #[getter]
    fn support(&self) -> Option<Vec<usize>> {
        self.inner.support()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n_samples={}, n_features={})", self.inner.n_samples(), self.inner.n_features())
    }
}

/// Fitted sparse linear model.
#[pyclass(name = "Model", module = "pymccard")]
pub struct PyModel {
    inner: mccard::SparseLinearModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn active(&self) -> Vec<usize> {
        self.inner.active.clone()
    }

    #[getter]
    fn relevance(&self) -> Vec<f64> {
        self.inner.relevance.clone()
    }

    #[getter]
    fn posterior_variances(&self) -> Vec<f64> {
        self.inner.posterior_variances.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.iter().map(|w| format!("{w:?}")).collect()
    }

    fn predict(&self, design: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix_from_rows(&design)?;
        Ok(self.inner.predict(&x).map_err(py_err)?.as_slice().to_vec())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: mccard::SparseLinearModel::from_json(text).map_err(py_err)? })
    }

    fn __repr__(&self) -> String {
        format!("Model(dim={}, selected={}, iterations={})", self.inner.dim(), self.inner.n_selected(), self.inner.iterations)
    }
}

#[pyfunction]
#[pyo3(signature = (dataset, prune_threshold = 1e6, max_outer_iters = 500, tol_w = 1e-6))]
fn fit_ls_ard(dataset: &PyDataset, prune_threshold: f64, max_outer_iters: usize, tol_w: f64) -> PyResult<PyModel> {
    let cfg = FitConfig { prune_threshold, max_outer_iters, tol_w, ..FitConfig::ls_ard_default() };
    Ok(PyModel { inner: mccard::fit_ls_ard(&dataset.inner, &cfg).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (
    dataset, kernel_bandwidth = 1.0, variant = "deviant", hessian_mode = "auto",
    prune_threshold = 1e6, max_outer_iters = 300, tol_w = 1e-6, tol_fp = 1e-8
))]
#[allow(clippy::too_many_arguments)]
fn fit_mcc_ard(
    dataset: &PyDataset,
    kernel_bandwidth: f64,
    variant: &str,
    hessian_mode: &str,
    prune_threshold: f64,
    max_outer_iters: usize,
    tol_w: f64,
    tol_fp: f64,
) -> PyResult<PyModel> {
    let cfg = FitConfig {
        kernel_bandwidth,
        likelihood_variant: parse_variant(variant)?,
        hessian_mode: parse_hessian(hessian_mode)?,
        prune_threshold,
        max_outer_iters,
        tol_w,
        tol_fp,
        ..FitConfig::default()
    };
    Ok(PyModel { inner: mccard::fit_mcc_ard(&dataset.inner, &cfg).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (dataset, kernel_bandwidth = 1.0, lam = 0.1, max_iters = 100, tol = 1e-6))]
fn fit_mcc_l1(dataset: &PyDataset, kernel_bandwidth: f64, lam: f64, max_iters: usize, tol: f64) -> PyResult<PyModel> {
    let cfg = L1Config { kernel_bandwidth, lambda: lam, max_iters, tol, ..L1Config::default() };
    Ok(PyModel { inner: mccard::fit_mcc_l1(&dataset.inner, &cfg).map_err(py_err)? })
}

/// Synthetic train (noisy) and test (noise-free) datasets.
#[pyfunction]
#[pyo3(signature = (
    n_train, n_test, dim, n_relevant, gaussian_variance = 0.05, outlier_scale = 5.0,
    outlier_proportion = 0.0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn generate(
    n_train: usize,
    n_test: usize,
    dim: usize,
    n_relevant: usize,
    gaussian_variance: f64,
    outlier_scale: f64,
    outlier_proportion: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let noise = NoiseSpec::new(gaussian_variance, outlier_scale, outlier_proportion).map_err(py_err)?;
    let spec = ScenarioSpec { n_train, n_test, dim, n_relevant, noise, seed };
    let (train, test) = gen(&spec).map_err(py_err)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Correlation (None when undefined) and RMSE.
#[pyfunction]
fn prediction_metrics<'py>(py: Python<'py>, predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let m = metrics(&predicted, &actual).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("r", m.r)?;
    d.set_item("rmse", m.rmse)?;
    Ok(d)
}

/// Test-set report of a model on a dataset carrying ground truth.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, model: &PyModel, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
    let r = eval_model(&model.inner, &dataset.inner).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("r", r.r_defined.then_some(r.r))?;
    d.set_item("rmse", r.rmse)?;
    d.set_item("tp", r.tp)?;
    d.set_item("fp", r.fp)?;
    d.set_item("fn", r.fn_)?;
    d.set_item("tn", r.tn)?;
    d.set_item("f1", r.f1)?;
    d.set_item("n_selected", r.n_selected)?;
    Ok(d)
}

/// K-fold selection of `h` (and `lam` for "mcc_l1"). Default grids are used when omitted.
#[pyfunction]
#[pyo3(signature = (dataset, solver = "mcc_ard", h_grid = None, lambda_grid = None, folds = 5, score = "r", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn cv_select<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    solver: &str,
    h_grid: Option<Vec<f64>>,
    lambda_grid: Option<Vec<f64>>,
    folds: usize,
    score: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let ds = &dataset.inner;
    let h_grid = h_grid.unwrap_or_else(|| default_h_grid(ds));
    let (solver, lambda_grid) = match solver {
        "mcc_ard" => (CvSolver::MccArd(FitConfig::default()), None),
        "mcc_ard_proper" => (CvSolver::MccArd(FitConfig::default().with_variant(LikelihoodVariant::Proper)), None),
        "mcc_l1" => (CvSolver::MccL1(L1Config::default()), Some(lambda_grid.unwrap_or_else(|| default_lambda_grid(ds, 8)))),
        _ => return Err(PyValueError::new_err(format!("unknown solver '{solver}'"))),
    };
    let res = cv(ds, &solver, &h_grid, lambda_grid.as_deref(), folds, parse_score(score)?, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("best_h", res.best_h)?;
    d.set_item("best_lambda", res.best_lambda)?;
    d.set_item("best_score", res.best_score)?;
    let table: Vec<(f64, Option<f64>, usize, Option<f64>)> =
        res.table.iter().map(|r| (r.h, r.lambda, r.fold, r.score)).collect();
    d.set_item("table", table)?;
    Ok(d)
}

#[pymodule]
fn pymccard(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit_ls_ard, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mcc_ard, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mcc_l1, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(cv_select, m)?)?;
    Ok(())
}
