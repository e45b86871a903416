//! A single local-surrogate explanation.
//!
//! Points are drawn from independent per-feature normals fitted on the
//! training data, labelled by the black box, weighted by an RBF kernel around
//! the reference, and a weighted linear model (optionally ridge-penalized) is
//! fitted on the most important features. The slope coefficients are the
//! explanation; the weighted R² of the surrogate measures its adherence.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::{predict_checked, PredictError, Predictor};
use crate::dataset::{DatasetError, FeatureStats};
use crate::linalg::solve_least_squares;

pub const DEFAULT_NUM_SAMPLES: usize = 5000;

#[derive(Debug, Error)]
pub enum LimeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("all kernel weights are zero")]
    AllZeroWeights,
    #[error("only {positive} points carry weight, {needed} needed for {coefficients} coefficients")]
    InsufficientSupport {
        positive: usize,
        needed: usize,
        coefficients: usize,
    },
    #[error("weighted variance of the response is zero")]
    ZeroVariance,
    #[error("black box returned a non-finite prediction for sample {row}")]
    NonFinitePrediction { row: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_penalty: f64,
    pub num_features: usize,
    pub seed: u64,
}

impl LimeConfig {
    pub fn new(kernel_width: f64, num_features: usize, seed: u64) -> Self {
        Self {
            num_samples: DEFAULT_NUM_SAMPLES,
            kernel_width,
            ridge_penalty: 0.0,
            num_features,
            seed,
        }
    }

    pub fn with_kernel_width(&self, kernel_width: f64) -> Self {
        Self {
            kernel_width,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), LimeError> {
        let bad = |msg: String| Err(LimeError::InvalidConfig(msg));
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return bad(format!("kernel width must be positive, got {}", self.kernel_width));
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return bad(format!(
                "ridge penalty must be non-negative, got {}",
                self.ridge_penalty
            ));
        }
        if self.num_features == 0 || self.num_features > dim {
            return bad(format!("num_features must be in 1..={dim}, got {}", self.num_features));
        }
        if self.num_samples < dim + 2 {
            return bad(format!(
                "num_samples must be at least {} for {dim} features, got {}",
                dim + 2,
                self.num_samples
            ));
        }
        Ok(())
    }
}

/// `n` rows drawn from independent normals `N(mean_k, std_k)`, row by row.
pub fn sample_points(stats: &FeatureStats, n: usize, seed: u64) -> DMatrix<f64> {
    let d = stats.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(stats.means[k] + stats.std_devs[k] * z);
        }
    }
    DMatrix::from_row_slice(n, d, &values)
}

/// RBF weight `exp(-D^2 / kw^2)`, `D` the Euclidean distance between the
/// standardized point and standardized reference.
///
/// The printed form of this kernel elsewhere has a positive exponent and an
/// unsquared width; that diverges instead of producing weights in (0, 1], so
/// the sign is negative here and the width is squared.
pub fn kernel_weight(
    point: &[f64],
    reference: &[f64],
    stats: &FeatureStats,
    kernel_width: f64,
) -> Result<f64, LimeError> {
    let p = stats.standardize(point)?;
    let r = stats.standardize(reference)?;
    let dist2: f64 = p.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rbf(dist2, kernel_width))
}

fn rbf(dist2: f64, kernel_width: f64) -> f64 {
    (-dist2 / (kernel_width * kernel_width)).exp()
}

/// Kernel weights for every row of `points`.
pub fn kernel_weights(
    points: &DMatrix<f64>,
    reference: &[f64],
    stats: &FeatureStats,
    kernel_width: f64,
) -> Result<Vec<f64>, LimeError> {
    let r = stats.standardize(reference)?;
    if points.ncols() != r.len() {
        return Err(DatasetError::DimensionMismatch {
            found: points.ncols(),
            expected: r.len(),
        }
        .into());
    }
    Ok((0..points.nrows())
        .map(|i| {
            let dist2: f64 = (0..r.len())
                .map(|k| {
                    let s = stats.std_devs[k];
                    let z = if s > 0.0 {
                        (points[(i, k)] - stats.means[k]) / s
                    } else {
                        0.0
                    };
                    (z - r[k]) * (z - r[k])
                })
                .sum();
            rbf(dist2, kernel_width)
        })
        .collect())
}

/// Result of a weighted (ridge) linear fit with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub intercept_std_error: f64,
}

impl WeightedFit {
    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept + row.into_iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.predict_row(x.row(i).iter().copied()))
            .collect()
    }
}

/// Minimizes `sum_i w_i (y_i - a - x_i^T b)^2 + penalty * |b|^2`.
///
/// Solved by QR on the row-weighted design augmented with `sqrt(penalty) I`
/// rows for the slopes. Standard errors use `s^2 = sum w r^2 / (n+ - p)` with
/// `n+` the number of strictly positive weights and `p = k + 1`: the plain WLS
/// covariance `s^2 (X^T W X)^{-1}` without penalty, the sandwich
/// `s^2 A^{-1} X^T W X A^{-1}` with `A = X^T W X + penalty I` otherwise.
pub fn fit_weighted_linear(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: &[f64],
    ridge_penalty: f64,
) -> Result<WeightedFit, LimeError> {
    let (n, k) = x.shape();
    if y.len() != n || weights.len() != n {
        return Err(LimeError::Length(format!(
            "{n} rows, {} responses, {} weights",
            y.len(),
            weights.len()
        )));
    }
    if !(ridge_penalty >= 0.0 && ridge_penalty.is_finite()) {
        return Err(LimeError::InvalidConfig(format!(
            "ridge penalty must be non-negative, got {ridge_penalty}"
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(LimeError::InvalidConfig(format!("invalid weight {w}")));
    }
    let p = k + 1;
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive == 0 {
        return Err(LimeError::AllZeroWeights);
    }
    if positive < p + 1 {
        return Err(LimeError::InsufficientSupport {
            positive,
            needed: p + 1,
            coefficients: p,
        });
    }

    let extra = if ridge_penalty > 0.0 { k } else { 0 };
    let mut design = DMatrix::zeros(n + extra, p);
    let mut rhs = DVector::zeros(n + extra);
    for i in 0..n {
        let sw = weights[i].sqrt();
        design[(i, 0)] = sw;
        for j in 0..k {
            design[(i, j + 1)] = sw * x[(i, j)];
        }
        rhs[i] = sw * y[i];
    }
    let root_penalty = ridge_penalty.sqrt();
    for j in 0..extra {
        design[(n + j, j + 1)] = root_penalty;
    }

    let ls = solve_least_squares(&design, &rhs).map_err(|e| LimeError::RankDeficient { column: e.column })?;
    let beta = ls.solution;

    let mut weighted_sse = 0.0;
    for i in 0..n {
        let fitted = beta[0] + (0..k).map(|j| x[(i, j)] * beta[j + 1]).sum::<f64>();
        let r = y[i] - fitted;
        weighted_sse += weights[i] * r * r;
    }
    let sigma2 = weighted_sse / (positive - p) as f64;

    let a_inv = ls.gram_inverse;
    let cov = if ridge_penalty > 0.0 {
        // A^{-1} (A - penalty J) A^{-1}, J = diag(0, 1, ..., 1)
        let mut penalty_diag = DMatrix::zeros(p, p);
        for j in 1..p {
            penalty_diag[(j, j)] = ridge_penalty;
        }
        (&a_inv - &a_inv * penalty_diag * &a_inv) * sigma2
    } else {
        &a_inv * sigma2
    };
    let se = |j: usize| cov[(j, j)].max(0.0).sqrt();

    Ok(WeightedFit {
        intercept: beta[0],
        coefficients: (1..p).map(|j| beta[j]).collect(),
        std_errors: (1..p).map(se).collect(),
        intercept_std_error: se(0),
    })
}

/// Weighted coefficient of determination. `raw` may be negative when the
/// surrogate does worse than the weighted mean; [`RSquared::value`] clamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSquared {
    pub raw: f64,
}

impl RSquared {
    pub fn value(&self) -> f64 {
        self.raw.clamp(0.0, 1.0)
    }

    pub fn clamped(&self) -> bool {
        self.raw < 0.0 || self.raw > 1.0
    }
}

pub fn weighted_r_squared(y: &[f64], y_hat: &[f64], weights: &[f64]) -> Result<RSquared, LimeError> {
    if y.len() != y_hat.len() || y.len() != weights.len() {
        return Err(LimeError::Length(format!(
            "{} responses, {} fitted values, {} weights",
            y.len(),
            y_hat.len(),
            weights.len()
        )));
    }
    let total_weight: f64 = weights.iter().sum();
    if total_weight.is_nan() || total_weight <= 0.0 {
        return Err(LimeError::AllZeroWeights);
    }
    let mean = weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total_weight;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for ((w, v), f) in weights.iter().zip(y).zip(y_hat) {
        sse += w * (v - f) * (v - f);
        sst += w * (v - mean) * (v - mean);
    }
    if sst.is_nan() || sst <= 0.0 {
        return Err(LimeError::ZeroVariance);
    }
    Ok(RSquared { raw: 1.0 - sse / sst })
}

/// Picks `k` features by the magnitude of their coefficients in a weighted fit
/// on all (column-standardized) features. Ties go to the lower index.
/// Constant columns carry no information and rank last.
pub fn select_features(x: &DMatrix<f64>, y: &[f64], weights: &[f64], k: usize) -> Result<Vec<usize>, LimeError> {
    let (n, d) = x.shape();
    if k == 0 || k > d {
        return Err(LimeError::InvalidConfig(format!("cannot select {k} of {d} features")));
    }
    let stats = FeatureStats::from_matrix(x)?;
    let active: Vec<usize> = (0..d).filter(|&j| stats.std_devs[j] > 0.0).collect();

    let mut importance = vec![0.0; d];
    if !active.is_empty() {
        let standardized = DMatrix::from_fn(n, active.len(), |i, c| {
            let j = active[c];
            (x[(i, j)] - stats.means[j]) / stats.std_devs[j]
        });
        let fit = fit_weighted_linear(&standardized, y, weights, 0.0)?;
        for (c, &j) in active.iter().enumerate() {
            importance[j] = fit.coefficients[c].abs();
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let rank = |j: usize| (stats.std_devs[j] > 0.0, importance[j]);
        let (ra, rb) = (rank(a), rank(b));
        rb.0.cmp(&ra.0).then(rb.1.total_cmp(&ra.1)).then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCoefficient {
    pub feature: String,
    pub index: usize,
    pub coefficient: f64,
    pub std_error: f64,
}

/// A local linear explanation around `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub reference: Vec<f64>,
    pub kernel_width: f64,
    pub seed: u64,
    pub ridge_penalty: f64,
    pub num_samples: usize,
    pub intercept: f64,
    pub r_squared: f64,
    pub r_squared_raw: f64,
    pub r_squared_clamped: bool,
    /// Selected features in selection-rank order.
    pub features: Vec<FeatureCoefficient>,
}

impl Explanation {
    pub fn selected_features(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.feature.as_str()).collect()
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureCoefficient> {
        self.features.iter().find(|f| f.feature == feature)
    }

    pub fn coefficient(&self, feature: &str) -> Option<f64> {
        self.get(feature).map(|f| f.coefficient)
    }
}

/// Samples, labels, weights and fits one explanation. Deterministic in
/// `config.seed`.
pub fn explain<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    config: &LimeConfig,
) -> Result<Explanation, LimeError> {
    let d = stats.dim();
    if feature_names.len() != d {
        return Err(LimeError::Length(format!(
            "{} feature names for {d} features",
            feature_names.len()
        )));
    }
    if reference.len() != d {
        return Err(DatasetError::DimensionMismatch {
            found: reference.len(),
            expected: d,
        }
        .into());
    }
    config.validate(d)?;

    let samples = sample_points(stats, config.num_samples, config.seed);
    let labels = predict_checked(predictor, &samples)?;
    if let Some(row) = labels.iter().position(|v| !v.is_finite()) {
        return Err(LimeError::NonFinitePrediction { row });
    }
    let weights = kernel_weights(&samples, reference, stats, config.kernel_width)?;

    let selected = select_features(&samples, &labels, &weights, config.num_features)?;
    let design = samples.select_columns(&selected);
    let fit = fit_weighted_linear(&design, &labels, &weights, config.ridge_penalty)?;
    let r2 = weighted_r_squared(&labels, &fit.predict(&design), &weights)?;

    let features = selected
        .iter()
        .enumerate()
        .map(|(c, &j)| FeatureCoefficient {
            feature: feature_names[j].clone(),
            index: j,
            coefficient: fit.coefficients[c],
            std_error: fit.std_errors[c],
        })
        .collect();

    Ok(Explanation {
        reference: reference.to_vec(),
        kernel_width: config.kernel_width,
        seed: config.seed,
        ridge_penalty: config.ridge_penalty,
        num_samples: config.num_samples,
        intercept: fit.intercept,
        r_squared: r2.value(),
        r_squared_raw: r2.raw,
        r_squared_clamped: r2.clamped(),
        features,
    })
}
