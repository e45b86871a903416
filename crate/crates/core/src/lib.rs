//! Local linear explanations of black-box models, with adherence (weighted
//! R²) and stability (CSI/VSI) diagnostics and a Bayesian search for the
//! widest kernel that still meets a requested adherence.

pub mod blackbox;
pub mod dataset;
pub mod lime;
mod linalg;
pub mod optimizer;
pub mod stability;
pub mod toy;
pub mod trend;

pub use blackbox::{ExternalPredictor, FnPredictor, PolynomialModel, PredictError, Predictor};
pub use dataset::{DatasetError, FeatureStats, TabularDataset};
pub use lime::{explain, Explanation, LimeConfig, LimeError};
pub use optimizer::{folded_loss, optilime, OptiLimeConfig, OptimizationResult, OptimizeError};
pub use stability::{StabilityConfig, StabilityError, StabilityReport};
pub use trend::{fit_logistic, KwScan, LogisticFit, TrendError};
