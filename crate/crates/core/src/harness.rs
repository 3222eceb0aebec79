//! Monte-Carlo sweeps over outlier scale and proportion, writing CSV tables.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::ls_ard::fit_ls_ard;
use crate::mcc_ard::fit_mcc_ard;
use crate::mcc_l1::{fit_mcc_l1, L1Config};
use crate::model::{FitConfig, LikelihoodVariant, SparseLinearModel};
use crate::model_selection::{cv_select, default_lambda_grid, CvScore, CvSolver, DEFAULT_FOLDS, DEFAULT_H_MULTIPLIERS};
use crate::rng::derive_seed;
use crate::synthgen::{generate, NoiseSpec, ScenarioSpec};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LsArd,
    MccArd,
    MccArdProper,
    MccL1,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LsArd, Method::MccArd, Method::MccArdProper, Method::MccL1];

    pub fn name(&self) -> &'static str {
        match self {
            Method::LsArd => "ls_ard",
            Method::MccArd => "mcc_ard",
            Method::MccArdProper => "mcc_ard_proper",
            Method::MccL1 => "mcc_l1",
        }
    }
}

impl Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSettings {
    pub folds: usize,
    pub score: CvScore,
    /// Bandwidth grid as multiples of the training-target variance.
    pub h_multipliers: Vec<f64>,
    /// Number of log-spaced penalty values for MCC-L1.
    pub lambda_points: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, score: CvScore::R, h_multipliers: DEFAULT_H_MULTIPLIERS.to_vec(), lambda_points: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Data template; its noise scale and proportion are replaced per cell.
    pub scenario: ScenarioSpec,
    pub tau_values: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub ard_config: FitConfig,
    #[serde(default = "FitConfig::ls_ard_default")]
    pub ls_ard_config: FitConfig,
    #[serde(default = "L1Config::sweep_default")]
    pub l1_config: L1Config,
    /// Fill the `seconds` column. Off by default so repeated sweeps give identical files.
    #[serde(default)]
    pub record_timing: bool,
}

fn psi_steps(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

impl SweepSpec {
    /// D = 200, 20 relevant, 100/100 samples, 20 repetitions, psi step 0.1.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            scenario: ScenarioSpec::desk_scale(NoiseSpec::default(), 0),
            tau_values: vec![2.0, 5.0, 10.0],
            psi_values: psi_steps(10),
            repetitions: 20,
            methods: vec![Method::LsArd, Method::MccArd, Method::MccArdProper, Method::MccL1],
            master_seed,
            cv: CvSettings::default(),
            ard_config: FitConfig::default(),
            ls_ard_config: FitConfig::ls_ard_default(),
            l1_config: L1Config::sweep_default(),
            record_timing: false,
        }
    }

    /// D = 1000, 30 relevant, 300/300 samples, 100 repetitions, psi step 0.05.
    pub fn paper(master_seed: u64) -> Self {
        Self {
            scenario: ScenarioSpec::paper_scale(NoiseSpec::default(), 0),
            psi_values: psi_steps(20),
            repetitions: 100,
            ..Self::desk(master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() || self.tau_values.is_empty() || self.psi_values.is_empty() {
            return Err(Error::InvalidConfig("methods, tau_values and psi_values must be non-empty".into()));
        }
        if self.psi_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("psi values must lie in [0, 1]".into()));
        }
        if self.cv.h_multipliers.is_empty() || self.cv.lambda_points == 0 {
            return Err(Error::InvalidConfig("CV grids must be non-empty".into()));
        }
        for &tau in &self.tau_values {
            NoiseSpec::new(self.scenario.noise.gaussian_variance, tau, 0.0)?;
        }
        self.ard_config.validate()?;
        self.ls_ard_config.validate()?;
        self.l1_config.validate()?;
        self.scenario.validate()
    }

    /// Data seed of one repetition; independent of the method list.
    pub fn cell_seed(&self, tau_idx: usize, psi_idx: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[tau_idx as u64, psi_idx as u64, rep as u64])
    }

    pub fn cell_scenario(&self, tau_idx: usize, psi_idx: usize, rep: usize) -> Result<ScenarioSpec> {
        let noise =
            NoiseSpec::new(self.scenario.noise.gaussian_variance, self.tau_values[tau_idx], self.psi_values[psi_idx])?;
        Ok(ScenarioSpec { noise, seed: self.cell_seed(tau_idx, psi_idx, rep), ..self.scenario.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub method: Method,
    pub tau: f64,
    pub psi: f64,
    pub rep: usize,
    pub report: Option<EvalReport>,
    pub h_chosen: Option<f64>,
    pub lambda_chosen: Option<f64>,
    pub iters: Option<usize>,
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample mean and standard deviation (n - 1 denominator, zero for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }

    pub fn standard_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub tau: f64,
    pub psi: f64,
    /// Successful repetitions.
    pub n: usize,
    pub n_failed: usize,
    pub r: Option<MeanStd>,
    pub rmse: Option<MeanStd>,
    pub f1: Option<MeanStd>,
    pub n_selected: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub detail: Vec<DetailRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutput {
    pub fn aggregate_for(&self, method: Method, tau: f64, psi: f64) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.method == method && a.tau == tau && a.psi == psi)
    }

    pub fn write_detail_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method", "tau", "psi", "rep", "r", "rmse", "f1", "n_selected", "h_chosen", "lambda_chosen", "iters",
            "seconds", "error",
        ])?;
        for row in &self.detail {
            let rep = row.report.as_ref();
            w.write_record([
                row.method.name().to_string(),
                row.tau.to_string(),
                row.psi.to_string(),
                row.rep.to_string(),
                opt(rep.map(|r| r.r)),
                opt(rep.map(|r| r.rmse)),
                opt(rep.map(|r| r.f1)),
                opt(rep.map(|r| r.n_selected)),
                opt(row.h_chosen),
                opt(row.lambda_chosen),
                opt(row.iters),
                opt(row.seconds),
                row.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method", "tau", "psi", "n", "n_failed", "r_mean", "r_std", "rmse_mean", "rmse_std", "f1_mean", "f1_std",
            "n_selected_mean", "n_selected_std",
        ])?;
        for a in &self.aggregate {
            let mut rec = vec![a.method.name().to_string(), a.tau.to_string(), a.psi.to_string(), a.n.to_string(), a.n_failed.to_string()];
            for ms in [a.r, a.rmse, a.f1, a.n_selected] {
                rec.push(opt(ms.map(|m| m.mean)));
                rec.push(opt(ms.map(|m| m.std)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct MethodOutcome {
    model: SparseLinearModel,
    h: Option<f64>,
    lambda: Option<f64>,
}

fn run_method(spec: &SweepSpec, method: Method, train: &Dataset, cv_seed: u64) -> Result<MethodOutcome> {
    let var = {
        let t = train.targets();
        let m = t.mean();
        t.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t.len() as f64
    };
    let scale = if var > 0.0 { var } else { 1.0 };
    let h_grid: Vec<f64> = spec.cv.h_multipliers.iter().map(|m| m * scale).collect();
    let folds = spec.cv.folds.min(train.n_samples());
    match method {
        Method::LsArd => Ok(MethodOutcome { model: fit_ls_ard(train, &spec.ls_ard_config)?, h: None, lambda: None }),
        Method::MccArd | Method::MccArdProper => {
            let variant = if method == Method::MccArd { LikelihoodVariant::Deviant } else { LikelihoodVariant::Proper };
            let cfg = spec.ard_config.clone().with_variant(variant);
            let h = if h_grid.len() == 1 || folds < 2 {
                h_grid[h_grid.len() - 1]
            } else {
                cv_select(train, &CvSolver::MccArd(cfg.clone()), &h_grid, None, folds, spec.cv.score, cv_seed)?.best_h
            };
            Ok(MethodOutcome { model: fit_mcc_ard(train, &cfg.with_bandwidth(h))?, h: Some(h), lambda: None })
        }
        Method::MccL1 => {
            let lambda_grid = default_lambda_grid(train, spec.cv.lambda_points);
            let (h, lambda) = if folds < 2 {
                (h_grid[h_grid.len() - 1], lambda_grid[lambda_grid.len() - 1])
            } else {
                let res = cv_select(
                    train,
                    &CvSolver::MccL1(spec.l1_config.clone()),
                    &h_grid,
                    Some(&lambda_grid),
                    folds,
                    spec.cv.score,
                    cv_seed,
                )?;
                (res.best_h, res.best_lambda.unwrap_or(spec.l1_config.lambda))
            };
            let cfg = L1Config { kernel_bandwidth: h, lambda, ..spec.l1_config.clone() };
            Ok(MethodOutcome { model: fit_mcc_l1(train, &cfg)?, h: Some(h), lambda: Some(lambda) })
        }
    }
}

fn run_cell(spec: &SweepSpec, tau_idx: usize, psi_idx: usize, rep: usize) -> Vec<DetailRow> {
    let (tau, psi) = (spec.tau_values[tau_idx], spec.psi_values[psi_idx]);
    let blank = |method: Method, error: String| DetailRow {
        method,
        tau,
        psi,
        rep,
        report: None,
        h_chosen: None,
        lambda_chosen: None,
        iters: None,
        seconds: None,
        error: Some(error),
    };
    let data = spec.cell_scenario(tau_idx, psi_idx, rep).and_then(|s| generate(&s));
    let (train, test) = match data {
        Ok(d) => d,
        Err(e) => return spec.methods.iter().map(|&m| blank(m, e.to_string())).collect(),
    };
    let cv_seed = derive_seed(spec.cell_seed(tau_idx, psi_idx, rep), &[u64::MAX]);
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = run_method(spec, method, &train, cv_seed).and_then(|o| evaluate(&o.model, &test).map(|r| (o, r)));
            let seconds = spec.record_timing.then(|| start.elapsed().as_secs_f64());
            match outcome {
                Ok((o, report)) => DetailRow {
                    method,
                    tau,
                    psi,
                    rep,
                    report: Some(report),
                    h_chosen: o.h,
                    lambda_chosen: o.lambda,
                    iters: Some(o.model.iterations),
                    seconds,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{method} failed at tau = {tau}, psi = {psi}, rep {rep}: {e}");
                    DetailRow { seconds, ..blank(method, e.to_string()) }
                }
            }
        })
        .collect()
}

/// Aggregates detail rows per (method, tau, psi), in the order of first appearance.
pub fn aggregate(detail: &[DetailRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, f64, f64)> = Vec::new();
    for d in detail {
        let k = (d.method, d.tau, d.psi);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, tau, psi)| {
            let rows: Vec<&DetailRow> = detail.iter().filter(|d| d.method == method && d.tau == tau && d.psi == psi).collect();
            let ok: Vec<&EvalReport> = rows.iter().filter_map(|d| d.report.as_ref()).collect();
            let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                method,
                tau,
                psi,
                n: ok.len(),
                n_failed: rows.len() - ok.len(),
                r: col(|r| r.r),
                rmse: col(|r| r.rmse),
                f1: col(|r| r.f1),
                n_selected: col(|r| r.n_selected as f64),
            }
        })
        .collect()
}

/// Runs every (tau, psi, repetition) cell without touching the file system.
/// Rows come back in (tau, psi, rep, method) order whatever the thread count.
pub fn run_sweep_in_memory(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let cells: Vec<(usize, usize, usize)> = (0..spec.tau_values.len())
        .flat_map(|t| (0..spec.psi_values.len()).flat_map(move |p| (0..spec.repetitions).map(move |r| (t, p, r))))
        .collect();
    let detail: Vec<DetailRow> = cells.par_iter().map(|&(t, p, r)| run_cell(spec, t, p, r)).collect::<Vec<_>>().into_iter().flatten().collect();
    let aggregate = aggregate(&detail);
    Ok(SweepOutput { detail, aggregate })
}

/// Runs the sweep and writes `detail.csv` and `aggregate.csv` into `out_dir`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepOutput> {
    fs::create_dir_all(out_dir)?;
    let out = run_sweep_in_memory(spec)?;
    out.write_detail_csv(fs::File::create(out_dir.join("detail.csv"))?)?;
    out.write_aggregate_csv(fs::File::create(out_dir.join("aggregate.csv"))?)?;
    Ok(out)
}

/// Sweep restricted to the two MCC-ARD likelihood variants on shared data.
pub fn ablation_spec(spec: &SweepSpec) -> SweepSpec {
    SweepSpec { methods: vec![Method::MccArd, Method::MccArdProper], ..spec.clone() }
}

pub fn run_ablation(spec: &SweepSpec, out_dir: &Path) -> Result<SweepOutput> {
    run_sweep(&ablation_spec(spec), out_dir)
}
