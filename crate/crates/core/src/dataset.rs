//! Tabular regression data and CSV ingestion.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense regression dataset. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    target: Vec<f64>,
    feature_names: Vec<String>,
    n_rows: usize,
    n_features: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, target: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows != target.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} targets",
                n_rows,
                target.len()
            )));
        }
        if n_rows < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 rows, got {n_rows}")));
        }
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(Error::InvalidConfig("need at least one feature".into()));
        }
        let mut features = Vec::with_capacity(n_rows * n_features);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} values, expected {n_features}",
                    row.len()
                )));
            }
            features.extend(row);
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / n_features,
                column: feature_names[pos % n_features].clone(),
                message: "non-finite value".into(),
            });
        }
        if let Some(pos) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos,
                column: "<target>".into(),
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            features,
            target,
            feature_names,
            n_rows,
            n_features,
        })
    }

    /// Reads a headered CSV; `target` names the response column, every other
    /// column must parse as a finite real.
    pub fn from_csv_path(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, target)
    }

    pub fn from_csv_reader<R: Read>(reader: R, target: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let target_col = headers.iter().position(|h| h == target).ok_or_else(|| {
            Error::InvalidConfig(format!("target column '{target}' not found in header"))
        })?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != target_col)
            .map(|(_, h)| h.clone())
            .collect();

        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            // data rows are 1-indexed after the header line
            let row_no = i + 1;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row: row_no,
                    column: "*".into(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let mut row = Vec::with_capacity(feature_names.len());
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: row_no,
                    column: headers[j].clone(),
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        column: headers[j].clone(),
                        message: format!("non-finite value '{field}'"),
                    });
                }
                if j == target_col {
                    y.push(v);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        Self::new(rows, y, feature_names)
    }

    /// Reads feature columns only (for prediction). Columns are matched by
    /// name against `feature_names`; extra columns are ignored.
    pub fn features_from_csv_path(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
        let file = std::fs::File::open(path)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let cols: Vec<usize> = feature_names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::InvalidConfig(format!("feature column '{name}' missing")))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = cols
                .iter()
                .map(|&c| {
                    let field = record.get(c).unwrap_or("");
                    field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                        row: i + 1,
                        column: headers[c].clone(),
                        message: format!("cannot parse '{field}' as a finite number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            out.push(row);
        }
        Ok(out)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.value(i, j)).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = rows.iter().map(|&i| self.row(i).to_vec()).collect();
        let target = rows.iter().map(|&i| self.target[i]).collect();
        Self::new(features, target, self.feature_names.clone())
    }

    /// Copy of this dataset with a replaced response vector.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        if target.len() != self.n_rows {
            return Err(Error::DimensionMismatch("replacement target length".into()));
        }
        let mut out = self.clone();
        out.target = target;
        Ok(out)
    }
}
