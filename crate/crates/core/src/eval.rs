//! Prediction and feature-selection metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::SparseLinearModel;

/// Correlation coefficient and root mean squared error.
///
/// `r` is `None` when either vector is constant, in which case the
/// correlation is undefined; `rmse` is always available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub r: Option<f64>,
    pub rmse: f64,
}

impl PredictionMetrics {
    /// Strict accessor for `r`.
    pub fn correlation(&self) -> Result<f64> {
        self.r.ok_or(Error::UndefinedCorrelation("constant predicted or actual vector"))
    }
}

pub fn prediction_metrics(predicted: &[f64], actual: &[f64]) -> Result<PredictionMetrics> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!(
            "predicted has {} entries, actual has {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.len() < 2 {
        return Err(Error::Empty("need at least two predictions"));
    }
    if predicted.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predictions"));
    }
    let n = predicted.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut va, mut sse) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &a) in predicted.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        cov += dp * da;
        vp += dp * dp;
        va += da * da;
        sse += (p - a) * (p - a);
    }
    let r = if vp > 0.0 && va > 0.0 { Some((cov / (vp * va).sqrt()).clamp(-1.0, 1.0)) } else { None };
    Ok(PredictionMetrics { r, rmse: (sse / n).sqrt() })
}

/// Confusion counts of the selected features against the true support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub n_selected: usize,
}

impl SelectionMetrics {
    pub fn precision(&self) -> f64 {
        if self.n_selected == 0 { 0.0 } else { self.tp as f64 / self.n_selected as f64 }
    }

    pub fn recall(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 { 0.0 } else { self.tp as f64 / pos as f64 }
    }

    /// F1 score. Zero when `tp = 0`, except an empty selection of an empty
    /// support, which counts as perfect.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return if self.fp == 0 && self.fn_ == 0 { 1.0 } else { 0.0 };
        }
        let (p, r) = (self.precision(), self.recall());
        2.0 * p * r / (p + r)
    }
}

pub fn selection_from_active(dim: usize, active: &[usize], true_support: &[usize]) -> Result<SelectionMetrics> {
    let mut selected = vec![false; dim];
    for &d in active {
        if d >= dim {
            return Err(Error::DimensionMismatch(format!("active index {d} out of range for dimension {dim}")));
        }
        selected[d] = true;
    }
    let mut truth = vec![false; dim];
    for &d in true_support {
        if d >= dim {
            return Err(Error::DimensionMismatch(format!("support index {d} out of range for dimension {dim}")));
        }
        truth[d] = true;
    }
    let mut m = SelectionMetrics { tp: 0, fp: 0, fn_: 0, tn: 0, n_selected: 0 };
    for (&s, &t) in selected.iter().zip(&truth) {
        match (s, t) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    m.n_selected = m.tp + m.fp;
    Ok(m)
}

pub fn selection_metrics(model: &SparseLinearModel, true_support: &[usize]) -> Result<SelectionMetrics> {
    selection_from_active(model.dim(), &model.active, true_support)
}

/// Combined test-set report. An undefined correlation is stored as `r = 0`
/// with `r_defined = false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r: f64,
    pub r_defined: bool,
    pub rmse: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub f1: f64,
    pub n_selected: usize,
}

/// Evaluates `model` on `test`. Selection metrics require the dataset to
/// carry its ground-truth weights.
pub fn evaluate(model: &SparseLinearModel, test: &Dataset) -> Result<EvalReport> {
    let pred: DVector<f64> = model.predict(test.design())?;
    let pm = prediction_metrics(pred.as_slice(), test.targets().as_slice())?;
    let support = test.support().ok_or(Error::InvalidConfig("test dataset has no ground-truth weights".into()))?;
    let sm = selection_metrics(model, &support)?;
    Ok(EvalReport {
        r: pm.r.unwrap_or(0.0),
        r_defined: pm.r.is_some(),
        rmse: pm.rmse,
        tp: sm.tp,
        fp: sm.fp,
        fn_: sm.fn_,
        tn: sm.tn,
        f1: sm.f1(),
        n_selected: sm.n_selected,
    })
}
