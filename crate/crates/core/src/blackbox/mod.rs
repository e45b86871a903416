//! Uniform prediction interface over black-box models.
//!
//! A [`Predictor`] maps a batch of query points (one per matrix row) to one
//! real prediction per row. Implementations must be deterministic: the same
//! batch always yields the same predictions, so perturbed samples lie exactly
//! on the model surface.

mod external;
mod polynomial;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use external::ExternalPredictor;
pub use polynomial::{PolynomialError, PolynomialModel};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("predictor expects {expected} features, batch has {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("failed to launch `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error talking to predictor process: {0}")]
    Io(#[from] std::io::Error),
    #[error("predictor process closed its output after {received} of {expected} lines")]
    ProcessExited { received: usize, expected: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("predictor did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("predictor process is unusable after an earlier failure")]
    Broken,
    #[error("predictor returned {found} predictions for {expected} rows")]
    LengthMismatch { expected: usize, found: usize },
}

pub trait Predictor: Send + Sync {
    /// One prediction per row of `points`.
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError>;

    fn descriptor(&self) -> String;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        (**self).predict(points)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        (**self).predict(points)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        (**self).predict(points)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// Row-wise closure predictor, handy for analytic black boxes.
pub struct FnPredictor<F> {
    label: String,
    dim: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(label: impl Into<String>, dim: usize, f: F) -> Self {
        Self {
            label: label.into(),
            dim,
            f,
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        if points.ncols() != self.dim {
            return Err(PredictError::FeatureCount {
                expected: self.dim,
                found: points.ncols(),
            });
        }
        let mut row = vec![0.0; self.dim];
        Ok((0..points.nrows())
            .map(|r| {
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = points[(r, c)];
                }
                (self.f)(&row)
            })
            .collect())
    }

    fn descriptor(&self) -> String {
        self.label.clone()
    }
}

/// Calls `predictor` and checks the output length contract.
pub(crate) fn predict_checked<P: Predictor + ?Sized>(
    predictor: &P,
    points: &DMatrix<f64>,
) -> Result<Vec<f64>, PredictError> {
    let out = predictor.predict(points)?;
    if out.len() != points.nrows() {
        return Err(PredictError::LengthMismatch {
            expected: points.nrows(),
            found: out.len(),
        });
    }
    Ok(out)
}
