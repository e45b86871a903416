//! Tabular numeric data and the per-feature statistics that drive
//! perturbation sampling and distance standardization.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV has no header row")]
    MissingHeader,
    #[error("unknown target column `{0}`")]
    UnknownTarget(String),
    #[error("row {row}, column `{column}`: cannot parse `{cell}` as a finite real")]
    BadCell { row: usize, column: String, cell: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("feature names must be unique and non-empty (offending: `{0}`)")]
    BadFeatureName(String),
    #[error("dataset needs at least 1 feature")]
    NoFeatures,
    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("non-finite value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
    #[error("target has {found} entries, expected {expected}")]
    TargetLength { found: usize, expected: usize },
    #[error("point has {found} coordinates, expected {expected}")]
    DimensionMismatch { found: usize, expected: usize },
}

/// A numeric feature matrix with an optional target column.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    rows: DMatrix<f64>,
    target: Option<Vec<f64>>,
}

impl TabularDataset {
    /// Validates and wraps a feature matrix (`n_rows x d`).
    pub fn new(feature_names: Vec<String>, rows: DMatrix<f64>, target: Option<Vec<f64>>) -> Result<Self, DatasetError> {
        if feature_names.is_empty() || rows.ncols() == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if feature_names.len() != rows.ncols() {
            return Err(DatasetError::DimensionMismatch {
                found: feature_names.len(),
                expected: rows.ncols(),
            });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.trim().is_empty() || !seen.insert(name.as_str()) {
                return Err(DatasetError::BadFeatureName(name.clone()));
            }
        }
        if rows.nrows() < 2 {
            return Err(DatasetError::TooFewRows(rows.nrows()));
        }
        for r in 0..rows.nrows() {
            for c in 0..rows.ncols() {
                if !rows[(r, c)].is_finite() {
                    return Err(DatasetError::NonFinite { row: r, feature: c });
                }
            }
        }
        if let Some(t) = &target {
            if t.len() != rows.nrows() {
                return Err(DatasetError::TargetLength {
                    found: t.len(),
                    expected: rows.nrows(),
                });
            }
            if let Some(row) = t.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row,
                    feature: rows.ncols(),
                });
            }
        }
        Ok(Self {
            feature_names,
            rows,
            target,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, index: usize) -> Option<Vec<f64>> {
        (index < self.n_rows()).then(|| self.rows.row(index).iter().copied().collect())
    }

    /// Reads a header-first CSV. When `target_column` names a column it is split
    /// out as the target; every other column becomes a feature, order preserved.
    pub fn load_csv(path: impl AsRef<Path>, target_column: Option<&str>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file, target_column)
    }

    pub fn read_csv(reader: impl Read, target_column: Option<&str>) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(DatasetError::MissingHeader);
        }
        let target_idx = match target_column {
            Some(name) => Some(
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| DatasetError::UnknownTarget(name.to_owned()))?,
            ),
            None => None,
        };

        let mut values = Vec::new();
        let mut target = Vec::new();
        let mut n_rows = 0;
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            // 1-based data row numbering, header excluded
            let row = i + 1;
            if record.len() != header.len() {
                return Err(DatasetError::RaggedRow {
                    row,
                    found: record.len(),
                    expected: header.len(),
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::BadCell {
                        row,
                        column: header[c].clone(),
                        cell: cell.to_owned(),
                    })?;
                if Some(c) == target_idx {
                    target.push(v);
                } else {
                    values.push(v);
                }
            }
            n_rows += 1;
        }

        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let d = feature_names.len();
        if d == 0 {
            return Err(DatasetError::NoFeatures);
        }
        let rows = DMatrix::from_row_slice(n_rows, d, &values);
        Self::new(feature_names, rows, target_idx.map(|_| target))
    }

    /// Writes the dataset as CSV, the target (if any) as a trailing column.
    /// Reals are written in shortest round-trip form.
    pub fn write_csv(&self, mut out: impl Write, target_name: &str) -> std::io::Result<()> {
        let mut header = self.feature_names.join(",");
        if self.target.is_some() {
            header.push(',');
            header.push_str(target_name);
        }
        writeln!(out, "{header}")?;
        for r in 0..self.n_rows() {
            let mut line = self
                .rows
                .row(r)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            if let Some(t) = &self.target {
                line.push(',');
                line.push_str(&t[r].to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn compute_stats(&self) -> FeatureStats {
        FeatureStats::from_matrix(&self.rows).expect("dataset invariant: at least 2 rows")
    }
}

/// Per-feature mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl FeatureStats {
    pub fn new(means: Vec<f64>, std_devs: Vec<f64>) -> Result<Self, DatasetError> {
        if means.len() != std_devs.len() {
            return Err(DatasetError::DimensionMismatch {
                found: std_devs.len(),
                expected: means.len(),
            });
        }
        if means.is_empty() {
            return Err(DatasetError::NoFeatures);
        }
        if let Some(feature) = means
            .iter()
            .zip(&std_devs)
            .position(|(m, s)| !m.is_finite() || !s.is_finite() || *s < 0.0)
        {
            return Err(DatasetError::NonFinite { row: 0, feature });
        }
        Ok(Self { means, std_devs })
    }

    /// Column means and (n-1)-denominator standard deviations.
    pub fn from_matrix(rows: &DMatrix<f64>) -> Result<Self, DatasetError> {
        let n = rows.nrows();
        if n < 2 {
            return Err(DatasetError::TooFewRows(n));
        }
        let mut means = Vec::with_capacity(rows.ncols());
        let mut std_devs = Vec::with_capacity(rows.ncols());
        for col in rows.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            means.push(mean);
            std_devs.push((ss / (n - 1) as f64).sqrt());
        }
        Ok(Self { means, std_devs })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// `(x_j - mean_j) / std_j`, with constant features mapped to 0.
    pub fn standardize(&self, point: &[f64]) -> Result<Vec<f64>, DatasetError> {
        if point.len() != self.dim() {
            return Err(DatasetError::DimensionMismatch {
                found: point.len(),
                expected: self.dim(),
            });
        }
        Ok(point
            .iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect())
    }
}
