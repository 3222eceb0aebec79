//! Datasets and their CSV/JSON on-disk form.
//!
//! A dataset is stored as a CSV file with header `x1,...,xD,t` and an optional
//! sidecar JSON file next to it (same stem, `.json` extension) holding the
//! ground-truth weights and the generator seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design matrix (N samples by D features) with its target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    truth: Option<DVector<f64>>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

/// Column means and standard deviations removed by [`Dataset::standardized`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaling {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if design.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but targets has {} entries",
                design.nrows(),
                targets.len()
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        Ok(Self { design, targets, truth: None, seed: None })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        let design = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(design, DVector::from_column_slice(targets))
    }

    /// Attaches ground-truth weights; the support is derived from their nonzero entries.
    pub fn with_truth(mut self, truth: DVector<f64>) -> Result<Self> {
        if truth.len() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "truth has {} entries but design has {} columns",
                truth.len(),
                self.n_features()
            )));
        }
        if truth.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("truth"));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn truth(&self) -> Option<&DVector<f64>> {
        self.truth.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Indices of the nonzero ground-truth weights, in increasing order.
    pub fn support(&self) -> Option<Vec<usize>> {
        self.truth
            .as_ref()
            .map(|w| w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect())
    }

    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.design.ncols()
    }

    /// Rows `idx` (in the given order) as a new dataset; truth and seed are kept.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select_rows(idx),
            targets: self.targets.select_rows(idx),
            truth: self.truth.clone(),
            seed: self.seed,
        }
    }

    /// Z-scored copy of the dataset. Constant columns are centered but not scaled.
    /// Ground-truth weights are dropped since they no longer apply.
    pub fn standardized(&self) -> (Dataset, ColumnScaling) {
        let n = self.n_samples().max(1) as f64;
        let mut design = self.design.clone();
        let mut means = Vec::with_capacity(self.n_features());
        let mut stds = Vec::with_capacity(self.n_features());
        for mut col in design.column_iter_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.apply(|v| *v = (*v - mean) / std);
            means.push(mean);
            stds.push(std);
        }
        let ds = Dataset { design, targets: self.targets.clone(), truth: None, seed: self.seed };
        (ds, ColumnScaling { means, stds })
    }

    /// Sidecar path for a dataset CSV: same stem with a `.json` extension.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV file and, when truth or seed is present, the sidecar JSON.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(csv_path)?);
        let header: Vec<String> =
            (1..=self.n_features()).map(|j| format!("x{j}")).chain(std::iter::once("t".into())).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_samples() {
            line.clear();
            for j in 0..self.n_features() {
                line.push_str(&self.design[(i, j)].to_string());
                line.push(',');
            }
            line.push_str(&self.targets[i].to_string());
            writeln!(w, "{line}")?;
        }
        w.flush()?;

        if self.truth.is_some() || self.seed.is_some() {
            let sidecar = Sidecar { truth: self.truth.as_ref().map(|t| t.as_slice().to_vec()), seed: self.seed };
            let f = BufWriter::new(File::create(Self::sidecar_path(csv_path))?);
            serde_json::to_writer_pretty(f, &sidecar)?;
        }
        Ok(())
    }

    /// Reads a dataset CSV and its sidecar JSON if one exists.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let format_err = |reason: String| Error::Format { path: csv_path.to_path_buf(), reason };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(csv_path)?;
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 {
            return Err(format_err("expected at least one feature column and a target column".into()));
        }
        for (j, h) in headers.iter().enumerate().take(ncols - 1) {
            if h.trim() != format!("x{}", j + 1) {
                return Err(format_err(format!("column {} is named {h:?}, expected \"x{}\"", j + 1, j + 1)));
            }
        }
        if headers[ncols - 1].trim() != "t" {
            return Err(format_err("last column must be named \"t\"".into()));
        }

        let d = ncols - 1;
        let mut values = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != ncols {
                return Err(format_err(format!("row {} has {} fields, expected {ncols}", i + 1, rec.len())));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| format_err(format!("row {}, column {}: cannot parse {field:?}", i + 1, j + 1)))?;
                if j < d {
                    values.push(v);
                } else {
                    targets.push(v);
                }
            }
        }
        let n = targets.len();
        let design = DMatrix::from_row_slice(n, d, &values);
        let mut ds = Dataset::new(design, DVector::from_vec(targets))?;

        let sidecar_path = Self::sidecar_path(csv_path);
        if sidecar_path.exists() {
            let sidecar: Sidecar = serde_json::from_reader(BufReader::new(File::open(&sidecar_path)?))?;
            if let Some(truth) = sidecar.truth {
                ds = ds.with_truth(DVector::from_vec(truth))?;
            }
            ds.seed = sidecar.seed;
        }
        Ok(ds)
    }
}
