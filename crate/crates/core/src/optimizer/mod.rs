//! Kernel-width search under an adherence target.
//!
//! Adherence (weighted R²) falls as the kernel width grows while stability
//! rises. Folding the R² curve at the requested adherence turns "largest width
//! whose R² still meets the target" into the maximizer of a scalar loss, which
//! is found by Bayesian optimization over log kernel width.

mod gp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::Predictor;
use crate::dataset::FeatureStats;
use crate::lime::{explain, Explanation, LimeConfig, LimeError};
use crate::stability::{assess, StabilityConfig, StabilityError, StabilityReport};

pub use gp::{expected_improvement, GaussianProcess, Hyperparameters};

/// Candidate points scored by the acquisition function per iteration.
const ACQUISITION_GRID: usize = 2001;
/// Exploration margin for expected improvement, in standardized loss units.
const EI_XI: f64 = 0.01;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective returned a non-finite loss at kw={0}")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Lime(#[from] LimeError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// `r` below the target, `2 * target - r` above it. Peaks at `target`.
pub fn folded_loss(r_squared: f64, target: f64) -> f64 {
    if r_squared <= target {
        r_squared
    } else {
        2.0 * target - r_squared
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub r_squared: f64,
}

/// A noisy scalar function of the kernel width to be maximized.
pub trait Objective {
    /// `evaluation` is the 0-based index of this call within the search.
    fn evaluate(&mut self, kernel_width: f64, evaluation: usize) -> Result<Evaluation, OptimizeError>;
}

impl<F> Objective for F
where
    F: FnMut(f64, usize) -> Result<Evaluation, OptimizeError>,
{
    fn evaluate(&mut self, kernel_width: f64, evaluation: usize) -> Result<Evaluation, OptimizeError> {
        self(kernel_width, evaluation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preliminary,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub kernel_width: f64,
    pub loss: f64,
    pub r_squared: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub kw_bounds: (f64, f64),
    pub preliminary_calls: usize,
    pub refinement_iterations: usize,
    pub seed: u64,
}

impl SearchSettings {
    fn validate(&self) -> Result<(), OptimizeError> {
        let (lo, hi) = self.kw_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(OptimizeError::InvalidConfig(format!(
                "kw bounds must satisfy 0 < low < high, got ({lo}, {hi})"
            )));
        }
        if self.preliminary_calls == 0 || self.refinement_iterations == 0 {
            return Err(OptimizeError::InvalidConfig(
                "preliminary calls and refinement iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_kw: f64,
    pub best_loss: f64,
    /// Every observed loss was identical; `best_kw` is then the bounds midpoint.
    pub degenerate: bool,
    pub trace: Vec<TraceEntry>,
}

/// splitmix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `evaluation`-th objective call of a search seeded by `seed`.
pub fn evaluation_seed(seed: u64, evaluation: usize) -> u64 {
    mix(seed ^ mix(evaluation as u64 + 1))
}

fn van_der_corput(mut i: u64) -> f64 {
    let mut q = 0.0;
    let mut base = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            q += base;
        }
        i >>= 1;
        base *= 0.5;
    }
    q
}

/// Randomly shifted base-2 van der Corput points in `[0, 1)`.
fn preliminary_design(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let shift: f64 = rng.random();
    (0..count as u64).map(|i| (van_der_corput(i) + shift).fract()).collect()
}

/// `p` low-discrepancy evaluations over log-bounds, then `m` iterations that
/// each evaluate the expected-improvement maximizer of a GP fitted to all
/// evaluations so far. Returns the best observed evaluation.
pub fn maximize<O: Objective + ?Sized>(
    settings: &SearchSettings,
    objective: &mut O,
) -> Result<SearchOutcome, OptimizeError> {
    settings.validate()?;
    let (lo, hi) = (settings.kw_bounds.0.ln(), settings.kw_bounds.1.ln());
    let to_kw = |u: f64| {
        (lo + u * (hi - lo))
            .exp()
            .clamp(settings.kw_bounds.0, settings.kw_bounds.1)
    };

    let mut unit = Vec::new();
    let mut losses = Vec::new();
    let mut trace = Vec::new();
    let mut observe = |u: f64, phase: Phase, objective: &mut O, unit: &mut Vec<f64>, losses: &mut Vec<f64>| {
        let kw = to_kw(u);
        let eval = objective.evaluate(kw, trace.len())?;
        if !eval.loss.is_finite() {
            return Err(OptimizeError::NonFiniteLoss(kw));
        }
        unit.push(u);
        losses.push(eval.loss);
        trace.push(TraceEntry {
            kernel_width: kw,
            loss: eval.loss,
            r_squared: eval.r_squared,
            phase,
        });
        Ok(())
    };

    for u in preliminary_design(settings.preliminary_calls, settings.seed) {
        observe(u, Phase::Preliminary, objective, &mut unit, &mut losses)?;
    }

    for _ in 0..settings.refinement_iterations {
        let next = match GaussianProcess::fit(&unit, &losses) {
            Some(gp) => {
                let incumbent = unit.iter().map(|u| gp.predict(*u).0).fold(f64::NEG_INFINITY, f64::max);
                let xi = EI_XI * gp_scale(&losses);
                let mut best = (0.0, f64::NEG_INFINITY);
                for i in 0..ACQUISITION_GRID {
                    let u = i as f64 / (ACQUISITION_GRID - 1) as f64;
                    let (mean, sd) = gp.predict(u);
                    let ei = expected_improvement(mean, sd, incumbent, xi);
                    if ei > best.1 {
                        best = (u, ei);
                    }
                }
                best.0
            }
            // unreachable in practice: the largest noise ratio always factorizes
            None => 0.5,
        };
        observe(next, Phase::Refinement, objective, &mut unit, &mut losses)?;
    }

    let (best_idx, best_loss) =
        losses.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
        );
    let min_loss = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let degenerate = best_loss - min_loss <= 1e-12 * best_loss.abs().max(1.0);
    let best_kw = if degenerate {
        0.5 * (settings.kw_bounds.0 + settings.kw_bounds.1)
    } else {
        trace[best_idx].kernel_width
    };
    Ok(SearchOutcome {
        best_kw,
        best_loss,
        degenerate,
        trace,
    })
}

fn gp_scale(losses: &[f64]) -> f64 {
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let sd = (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptiLimeConfig {
    pub target_adherence: f64,
    pub preliminary_calls: usize,
    pub refinement_iterations: usize,
    /// Defaults to `[0.05, 3 * sqrt(d)]` when absent.
    pub kw_bounds: Option<(f64, f64)>,
    pub stability_repetitions: usize,
    pub confidence_level: f64,
    /// Sampling, ridge, feature-count and seed settings for every explanation;
    /// its kernel width is ignored.
    pub lime: LimeConfig,
    #[serde(skip)]
    pub jobs: usize,
}

impl OptiLimeConfig {
    pub fn new(lime: LimeConfig) -> Self {
        Self {
            target_adherence: 0.9,
            preliminary_calls: 10,
            refinement_iterations: 30,
            kw_bounds: None,
            stability_repetitions: 10,
            confidence_level: 0.95,
            lime,
            jobs: 1,
        }
    }

    pub fn resolved_bounds(&self, dim: usize) -> (f64, f64) {
        self.kw_bounds.unwrap_or((0.05, 3.0 * (dim as f64).sqrt()))
    }

    pub fn search_settings(&self, dim: usize) -> SearchSettings {
        SearchSettings {
            kw_bounds: self.resolved_bounds(dim),
            preliminary_calls: self.preliminary_calls,
            refinement_iterations: self.refinement_iterations,
            seed: self.lime.seed,
        }
    }

    fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.target_adherence > 0.0 && self.target_adherence < 1.0) {
            return Err(OptimizeError::InvalidConfig(format!(
                "target adherence must lie in (0, 1), got {}",
                self.target_adherence
            )));
        }
        Ok(())
    }
}

/// The objective: one explanation per evaluation, each with its own derived seed.
pub struct AdherenceObjective<'a, P: ?Sized> {
    pub predictor: &'a P,
    pub feature_names: &'a [String],
    pub stats: &'a FeatureStats,
    pub reference: &'a [f64],
    pub lime: &'a LimeConfig,
    pub target: f64,
}

impl<P: Predictor + ?Sized> Objective for AdherenceObjective<'_, P> {
    fn evaluate(&mut self, kernel_width: f64, evaluation: usize) -> Result<Evaluation, OptimizeError> {
        let cfg = LimeConfig {
            kernel_width,
            seed: evaluation_seed(self.lime.seed, evaluation),
            ..self.lime.clone()
        };
        let e = explain(self.predictor, self.feature_names, self.stats, self.reference, &cfg)?;
        Ok(Evaluation {
            loss: folded_loss(e.r_squared, self.target),
            r_squared: e.r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub config: OptiLimeConfig,
    pub kw_bounds: (f64, f64),
    pub best_kw: f64,
    pub best_loss: f64,
    pub achieved_r_squared: f64,
    pub degenerate: bool,
    pub explanation: Explanation,
    pub stability: StabilityReport,
    pub trace: Vec<TraceEntry>,
}

/// Full search: maximize the folded loss, then explain and assess stability
/// at the chosen width using the configured seed.
pub fn optilime<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    config: &OptiLimeConfig,
) -> Result<OptimizationResult, OptimizeError> {
    config.validate()?;
    let settings = config.search_settings(stats.dim());
    let mut objective = AdherenceObjective {
        predictor,
        feature_names,
        stats,
        reference,
        lime: &config.lime,
        target: config.target_adherence,
    };
    let outcome = maximize(&settings, &mut objective)?;

    let lime = config.lime.with_kernel_width(outcome.best_kw);
    let stability_cfg = StabilityConfig {
        repetitions: config.stability_repetitions,
        confidence_level: config.confidence_level,
        lime: lime.clone(),
        jobs: config.jobs,
    };
    let stability = assess(predictor, feature_names, stats, reference, &stability_cfg)?;
    // the first repetition uses the configured seed
    let explanation = stability.explanations[0].clone();
    debug_assert_eq!(explanation.seed, lime.seed);

    Ok(OptimizationResult {
        config: config.clone(),
        kw_bounds: settings.kw_bounds,
        best_kw: outcome.best_kw,
        best_loss: outcome.best_loss,
        achieved_r_squared: explanation.r_squared,
        degenerate: outcome.degenerate,
        explanation,
        stability,
        trace: outcome.trace,
    })
}
