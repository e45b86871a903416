//! Kernel-width sweeps and logistic trend fits.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::Predictor;
use crate::dataset::FeatureStats;
use crate::stability::{assess, StabilityConfig, StabilityError};

#[derive(Debug, Error)]
pub enum TrendError {
    #[error("kernel-width grid must be non-empty, positive and strictly ascending")]
    BadGrid,
    #[error("logistic fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("xs must be finite and strictly ascending, with one y per x")]
    BadAbscissa,
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwPoint {
    pub kernel_width: f64,
    pub r_squared: f64,
    pub csi: f64,
    pub vsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwScan {
    pub repetitions: usize,
    pub points: Vec<KwPoint>,
}

impl KwScan {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.kernel_width).collect()
    }

    pub fn r_squared(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.r_squared).collect()
    }

    pub fn csi(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.csi).collect()
    }

    pub fn vsi(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.vsi).collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "kw,r_squared,csi,vsi")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.kernel_width, p.r_squared, p.csi, p.vsi)?;
        }
        Ok(())
    }
}

/// `steps` widths evenly spaced in log scale over `[min, max]`.
pub fn log_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, TrendError> {
    if !(min > 0.0 && max >= min && max.is_finite()) || steps == 0 || (steps > 1 && max == min) {
        return Err(TrendError::BadGrid);
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..steps)
        .map(|i| {
            if i == 0 {
                min
            } else if i == steps - 1 {
                max
            } else {
                (lo + (hi - lo) * i as f64 / (steps - 1) as f64).exp()
            }
        })
        .collect())
}

/// Runs a stability assessment at every width; the repetition seeds are the
/// same at each grid point.
pub fn scan<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    grid: &[f64],
    config: &StabilityConfig,
) -> Result<KwScan, TrendError> {
    if grid.is_empty() || grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrendError::BadGrid);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &kw in grid {
        let cfg = StabilityConfig {
            lime: config.lime.with_kernel_width(kw),
            ..config.clone()
        };
        let report = assess(predictor, feature_names, stats, reference, &cfg)?;
        points.push(KwPoint {
            kernel_width: kw,
            r_squared: report.mean_r_squared(),
            csi: report.csi,
            vsi: report.vsi,
        });
    }
    Ok(KwScan {
        repetitions: config.repetitions,
        points,
    })
}

/// Spearman rank correlation (average ranks for ties). `None` when either
/// series is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// `lower + (upper - lower) / (1 + exp(-growth_rate (x - midpoint)))`,
/// normalized so that `lower <= upper`; the sign of `growth_rate` is then the
/// direction of the trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub lower: f64,
    pub upper: f64,
    pub growth_rate: f64,
    pub midpoint: f64,
    pub mae: f64,
    pub converged: bool,
}

impl LogisticFit {
    pub fn eval(&self, x: f64) -> f64 {
        logistic(&self.params(), x)
    }

    fn params(&self) -> Vector4<f64> {
        Vector4::new(self.lower, self.upper, self.growth_rate, self.midpoint)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn logistic(p: &Vector4<f64>, x: f64) -> f64 {
    p[0] + (p[1] - p[0]) * sigmoid(p[2] * (x - p[3]))
}

fn sse(p: &Vector4<f64>, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (y - logistic(p, *x)).powi(2)).sum()
}

const LM_MAX_ITER: usize = 500;

/// Levenberg-Marquardt from one start. Returns the parameters and whether the
/// relative decrease criterion was met.
fn levenberg_marquardt(start: Vector4<f64>, xs: &[f64], ys: &[f64], max_rate: f64) -> (Vector4<f64>, bool) {
    let mut p = start;
    let mut cost = sse(&p, xs, ys);
    let mut damping = 1e-3;
    let scale = ys.iter().map(|y| y * y).sum::<f64>().max(1e-300);
    for _ in 0..LM_MAX_ITER {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (x, y) in xs.iter().zip(ys) {
            let s = sigmoid(p[2] * (x - p[3]));
            let ds = s * (1.0 - s);
            let span = p[1] - p[0];
            let j = Vector4::new(1.0 - s, s, span * ds * (x - p[3]), -span * ds * p[2]);
            let r = y - logistic(&p, *x);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if jtr.amax() <= 1e-15 * scale.sqrt() {
            return (p, true);
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += damping * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                damping *= 10.0;
                continue;
            };
            let mut trial = p + step;
            trial[2] = trial[2].clamp(-max_rate, max_rate);
            let trial_cost = sse(&trial, xs, ys);
            if trial_cost.is_finite() && trial_cost < cost {
                let decrease = cost - trial_cost;
                p = trial;
                cost = trial_cost;
                damping = (damping / 10.0).max(1e-15);
                improved = true;
                if decrease <= 1e-15 * (cost + 1e-300) || cost <= 1e-30 * scale {
                    return (p, true);
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            // no descent direction left at any damping: a stationary point
            return (p, true);
        }
    }
    (p, false)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_abs_residual(p: &Vector4<f64>, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (y - logistic(p, *x)).abs()).sum::<f64>() / xs.len() as f64
}

/// Least-squares 4-parameter logistic fit from deterministic multi-starts:
/// midpoints at the 0.25/0.5/0.75 quantiles of `xs` with both growth-rate
/// signs, two steeper starts at the median, and the constant mean fit. If the
/// least-squares winner has a larger MAE than the median constant, the
/// constant is returned instead.
pub fn fit_logistic(xs: &[f64], ys: &[f64]) -> Result<LogisticFit, TrendError> {
    if xs.len() < 5 {
        return Err(TrendError::TooFewPoints(xs.len()));
    }
    if ys.len() != xs.len() || xs.iter().chain(ys).any(|v| !v.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrendError::BadAbscissa);
    }
    let n = xs.len();
    let range = xs[n - 1] - xs[0];
    let max_rate = 1e4 / range;
    let mut sorted_y = ys.to_vec();
    sorted_y.sort_by(f64::total_cmp);
    let (y_min, y_max) = (sorted_y[0], sorted_y[n - 1]);
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let y_median = quantile(&sorted_y, 0.5);

    let mut starts = Vec::with_capacity(8);
    let base_rate = 8.0 / range;
    for q in [0.25, 0.5, 0.75] {
        let mid = quantile(xs, q);
        for sign in [1.0, -1.0] {
            starts.push(Vector4::new(y_min, y_max, sign * base_rate, mid));
        }
    }
    for sign in [1.0, -1.0] {
        starts.push(Vector4::new(y_min, y_max, sign * 5.0 * base_rate, quantile(xs, 0.5)));
    }

    let constant = Vector4::new(y_mean, y_mean, 0.0, quantile(xs, 0.5));
    let mut best = (constant, sse(&constant, xs, ys), true);
    for start in starts {
        let (p, converged) = levenberg_marquardt(start, xs, ys, max_rate);
        let cost = sse(&p, xs, ys);
        if cost.is_finite() && cost < best.1 {
            best = (p, cost, converged);
        }
    }

    let (mut p, _, converged) = best;
    let median_const = Vector4::new(y_median, y_median, 0.0, quantile(xs, 0.5));
    if mean_abs_residual(&p, xs, ys) > mean_abs_residual(&median_const, xs, ys) {
        p = median_const;
    }
    if p[0] > p[1] {
        p = Vector4::new(p[1], p[0], -p[2], p[3]);
    }
    Ok(LogisticFit {
        lower: p[0],
        upper: p[1],
        growth_rate: p[2],
        midpoint: p[3],
        mae: mean_abs_residual(&p, xs, ys),
        converged,
    })
}
