//! One-dimensional Gaussian-process surrogate with a squared-exponential
//! kernel and a fitted homoscedastic noise term.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const JITTER: f64 = 1e-10;

/// Candidate length scales and noise-to-signal ratios searched when fitting.
fn length_scales() -> impl Iterator<Item = f64> {
    (0..20).map(|i| 0.02 * 50f64.powf(i as f64 / 19.0))
}

fn noise_ratios() -> impl Iterator<Item = f64> {
    (0..13).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_ratio: f64,
}

pub struct GaussianProcess {
    inputs: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    pub hyper: Hyperparameters,
}

fn correlation(a: f64, b: f64, length_scale: f64) -> f64 {
    let d = (a - b) / length_scale;
    (-0.5 * d * d).exp()
}

fn gram(inputs: &[f64], length_scale: f64, noise_ratio: f64) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| {
        correlation(inputs[i], inputs[j], length_scale) + if i == j { noise_ratio + JITTER } else { 0.0 }
    })
}

impl GaussianProcess {
    /// Fits on standardized targets, choosing length scale and noise ratio by
    /// maximizing the marginal likelihood with the signal variance profiled out.
    pub fn fit(inputs: &[f64], targets: &[f64]) -> Option<Self> {
        let n = inputs.len();
        if n == 0 || targets.len() != n {
            return None;
        }
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_scale));

        let mut best: Option<(f64, Self)> = None;
        for length_scale in length_scales() {
            for noise_ratio in noise_ratios() {
                let Some(chol) = Cholesky::new(gram(inputs, length_scale, noise_ratio)) else {
                    continue;
                };
                let alpha = chol.solve(&y);
                let quad = y.dot(&alpha).max(1e-300);
                let signal_variance = quad / n as f64;
                let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                let log_lik = -0.5 * n as f64 * signal_variance.ln() - 0.5 * log_det;
                if best.as_ref().is_none_or(|(b, _)| log_lik > *b) {
                    best = Some((
                        log_lik,
                        Self {
                            inputs: inputs.to_vec(),
                            chol,
                            alpha,
                            y_mean,
                            y_scale,
                            hyper: Hyperparameters {
                                length_scale,
                                signal_variance,
                                noise_ratio,
                            },
                        },
                    ));
                }
            }
        }
        best.map(|(_, gp)| gp)
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| correlation(x, *xi, self.hyper.length_scale)),
        );
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (self.hyper.signal_variance * (1.0 - k.dot(&v))).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

/// Expected improvement over `incumbent` for a maximization problem.
pub fn expected_improvement(mean: f64, std_dev: f64, incumbent: f64, xi: f64) -> f64 {
    let gain = mean - incumbent - xi;
    if std_dev <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / std_dev;
    let normal = Normal::standard();
    gain * normal.cdf(z) + std_dev * normal.pdf(z)
}
