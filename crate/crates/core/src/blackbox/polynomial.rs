use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PredictError, Predictor};
use crate::dataset::TabularDataset;
use crate::linalg::solve_least_squares;

#[derive(Debug, Error, PartialEq)]
pub enum PolynomialError {
    #[error("polynomial regression needs exactly one feature, dataset has {0}")]
    NotUnivariate(usize),
    #[error("polynomial regression needs a target column")]
    MissingTarget,
    #[error("degree must be positive")]
    ZeroDegree,
    #[error("degree {degree} needs at least {needed} rows, dataset has {found}")]
    InsufficientRows { degree: usize, needed: usize, found: usize },
    #[error("Vandermonde system is singular (too few distinct x values for degree {0})")]
    Singular(usize),
    #[error("expected {expected} coefficients for degree {degree}, got {found}")]
    CoefficientCount {
        degree: usize,
        expected: usize,
        found: usize,
    },
}

/// Univariate polynomial `c0 + c1 x + ... + c_deg x^deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    degree: usize,
    coefficients: Vec<f64>,
}

impl PolynomialModel {
    pub fn new(degree: usize, coefficients: Vec<f64>) -> Result<Self, PolynomialError> {
        if degree == 0 {
            return Err(PolynomialError::ZeroDegree);
        }
        if coefficients.len() != degree + 1 {
            return Err(PolynomialError::CoefficientCount {
                degree,
                expected: degree + 1,
                found: coefficients.len(),
            });
        }
        Ok(Self { degree, coefficients })
    }

    /// Unweighted least-squares fit of `target` on powers of the single feature.
    pub fn fit(data: &TabularDataset, degree: usize) -> Result<Self, PolynomialError> {
        if data.n_features() != 1 {
            return Err(PolynomialError::NotUnivariate(data.n_features()));
        }
        let y = data.target().ok_or(PolynomialError::MissingTarget)?;
        let x: Vec<f64> = data.rows().column(0).iter().copied().collect();
        Self::fit_xy(&x, y, degree)
    }

    pub fn fit_xy(x: &[f64], y: &[f64], degree: usize) -> Result<Self, PolynomialError> {
        if degree == 0 {
            return Err(PolynomialError::ZeroDegree);
        }
        let n = x.len();
        if n < degree + 1 {
            return Err(PolynomialError::InsufficientRows {
                degree,
                needed: degree + 1,
                found: n,
            });
        }
        let vander = DMatrix::from_fn(n, degree + 1, |r, c| x[r].powi(c as i32));
        let rhs = DVector::from_column_slice(y);
        let ls = solve_least_squares(&vander, &rhs).map_err(|_| PolynomialError::Singular(degree))?;
        Ok(Self {
            degree,
            coefficients: ls.solution.iter().copied().collect(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients in ascending power order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }
}

impl Predictor for PolynomialModel {
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        if points.ncols() != 1 {
            return Err(PredictError::FeatureCount {
                expected: 1,
                found: points.ncols(),
            });
        }
        Ok(points.column(0).iter().map(|&x| self.eval(x)).collect())
    }

    fn descriptor(&self) -> String {
        format!("polynomial(degree={})", self.degree)
    }
}
