use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rules::{rule_predict, CandidatePool};

/// Centered rule-prediction matrix `M` (n rows, one column per pool rule).
///
/// Columns are stored contiguously. `column_means` and `target_mean` are the
/// training statistics needed to map new rows into the same centered space.
#[derive(Debug, Clone)]
pub struct PredictionMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    column_means: Vec<f64>,
    target_mean: f64,
    gamma: f64,
}

impl PredictionMatrix {
    /// Builds a matrix from raw (uncentered) columns.
    pub fn from_raw_columns(columns: Vec<Vec<f64>>, target_mean: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::GammaNotPositive(gamma));
        }
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        let mut column_means = Vec::with_capacity(n_cols);
        for col in columns {
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch("ragged prediction columns".into()));
            }
            let mean = col.iter().sum::<f64>() / n_rows as f64;
            column_means.push(mean);
            data.extend(col.iter().map(|v| v - mean));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
            column_means,
            target_mean,
            gamma,
        })
    }

    /// Stores `columns` as given, without centering. For hand-built test
    /// instances; production code goes through [`build_prediction_matrix`].
    #[doc(hidden)]
    pub fn from_columns_unchecked(columns: Vec<Vec<f64>>, target_mean: f64, gamma: f64) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        let n_cols = columns.len();
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged columns");
        Self {
            n_rows,
            n_cols,
            data: columns.into_iter().flatten().collect(),
            column_means: vec![0.0; n_cols],
            target_mean,
            gamma,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_rows..(i + 1) * self.n_rows]
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same matrix with a different ridge parameter.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::GammaNotPositive(gamma));
        }
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    /// `y - target_mean`.
    pub fn center_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v - self.target_mean).collect()
    }

    /// `M^T v` over all columns.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_cols).map(|i| dot(self.column(i), v)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column `i` holds rule `i`'s predictions on the training rows, centered.
pub fn build_prediction_matrix(pool: &CandidatePool, data: &Dataset, gamma: f64) -> Result<PredictionMatrix> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::GammaNotPositive(gamma));
    }
    if let Some(rule) = pool.rules().iter().find(|r| r.max_feature() >= data.n_features()) {
        return Err(Error::DimensionMismatch(format!(
            "rule uses feature {} but data has {} features",
            rule.max_feature(),
            data.n_features()
        )));
    }
    let n = data.n_rows();
    let columns: Vec<Vec<f64>> = pool
        .rules()
        .iter()
        .map(|rule| (0..n).map(|i| rule_predict(rule, data.row(i))).collect())
        .collect();
    let target_mean = data.target().iter().sum::<f64>() / n as f64;
    PredictionMatrix::from_raw_columns(columns, target_mean, gamma)
}
