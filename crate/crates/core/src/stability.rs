//! Stability of repeated explanations.
//!
//! The same explanation is recomputed `n` times with seeds `seed..seed+n` and
//! two indices summarize agreement:
//!
//! * VSI, the mean Jaccard similarity of the selected-feature sets over all
//!   unordered pairs of repetitions;
//! * CSI, per feature, the fraction of repetition pairs whose confidence
//!   intervals `b ± z * se` overlap, averaged over features present in at
//!   least two repetitions.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::blackbox::Predictor;
use crate::dataset::FeatureStats;
use crate::lime::{explain, Explanation, LimeConfig, LimeError};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("at least 2 explanations are required, got {0}")]
    TooFewExplanations(usize),
    #[error("explanations select different numbers of features ({0} vs {1})")]
    UnequalFeatureCounts(usize, usize),
    #[error("no feature is selected by two or more explanations")]
    NoSharedFeature,
    #[error("confidence level must lie in (0, 1), got {0}")]
    ConfidenceLevel(f64),
    #[error("repetitions must be at least 2, got {0}")]
    Repetitions(usize),
    #[error(transparent)]
    Lime(#[from] LimeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub repetitions: usize,
    pub confidence_level: f64,
    pub lime: LimeConfig,
    /// Upper bound on concurrently running explanations.
    #[serde(skip)]
    pub jobs: usize,
}

impl StabilityConfig {
    pub fn new(lime: LimeConfig) -> Self {
        Self {
            repetitions: 10,
            confidence_level: 0.95,
            lime,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.repetitions < 2 {
            return Err(StabilityError::Repetitions(self.repetitions));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(StabilityError::ConfidenceLevel(self.confidence_level));
        }
        Ok(())
    }

    /// Seeds `seed, seed+1, ..., seed+n-1` (wrapping).
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64)
            .map(|i| self.lime.seed.wrapping_add(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub csi: f64,
    pub vsi: f64,
    pub confidence_level: f64,
    pub per_feature_concordance: BTreeMap<String, f64>,
    pub pairwise_jaccard: Vec<Vec<f64>>,
    pub explanations: Vec<Explanation>,
}

impl StabilityReport {
    pub fn mean_r_squared(&self) -> f64 {
        self.explanations.iter().map(|e| e.r_squared).sum::<f64>() / self.explanations.len() as f64
    }
}

/// Runs one explanation per seed, preserving seed order. With `jobs > 1` the
/// calls run on a dedicated thread pool; results do not depend on `jobs`.
pub fn run_with_seeds<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    lime: &LimeConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<Explanation>, LimeError> {
    let one = |seed: &u64| explain(predictor, feature_names, stats, reference, &lime.with_seed(*seed));
    if jobs <= 1 {
        return seeds.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| LimeError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(one).collect())
}

pub fn run_repeated<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    config: &StabilityConfig,
) -> Result<Vec<Explanation>, StabilityError> {
    config.validate()?;
    Ok(run_with_seeds(
        predictor,
        feature_names,
        stats,
        reference,
        &config.lime,
        &config.seeds(),
        config.jobs,
    )?)
}

fn feature_set(e: &Explanation) -> BTreeSet<&str> {
    e.features.iter().map(|f| f.feature.as_str()).collect()
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Symmetric matrix of pairwise Jaccard similarities, unit diagonal.
pub fn pairwise_jaccard(explanations: &[Explanation]) -> Vec<Vec<f64>> {
    let sets: Vec<_> = explanations.iter().map(feature_set).collect();
    let n = sets.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = jaccard(&sets[i], &sets[j]);
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    m
}

pub fn vsi(explanations: &[Explanation]) -> Result<f64, StabilityError> {
    let n = explanations.len();
    if n < 2 {
        return Err(StabilityError::TooFewExplanations(n));
    }
    let k = explanations[0].features.len();
    if let Some(e) = explanations.iter().find(|e| e.features.len() != k) {
        return Err(StabilityError::UnequalFeatureCounts(k, e.features.len()));
    }
    let m = pairwise_jaccard(explanations);
    let total: f64 = m.iter().enumerate().flat_map(|(i, row)| &row[i + 1..]).sum();
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Two-sided normal critical value for `confidence_level`.
pub fn z_value(confidence_level: f64) -> Result<f64, StabilityError> {
    if !(confidence_level > 0.0 && confidence_level < 1.0) {
        return Err(StabilityError::ConfidenceLevel(confidence_level));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + confidence_level / 2.0))
}

/// Closed-interval overlap, allowing a gap of rounding size relative to the
/// endpoints: exact surrogates produce near-degenerate intervals whose centers
/// differ only in the last bits.
fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    let slack = 1e-9 * a.0.abs().max(a.1.abs()).max(b.0.abs()).max(b.1.abs());
    a.0 <= b.1 + slack && b.0 <= a.1 + slack
}

/// Returns the CSI and the per-feature concordance it averages.
pub fn csi(
    explanations: &[Explanation],
    confidence_level: f64,
) -> Result<(f64, BTreeMap<String, f64>), StabilityError> {
    if explanations.len() < 2 {
        return Err(StabilityError::TooFewExplanations(explanations.len()));
    }
    let z = z_value(confidence_level)?;

    let mut intervals: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for e in explanations {
        for f in &e.features {
            let half = z * f.std_error;
            intervals
                .entry(f.feature.as_str())
                .or_default()
                .push((f.coefficient - half, f.coefficient + half));
        }
    }

    let mut per_feature = BTreeMap::new();
    for (feature, ivs) in intervals.iter().filter(|(_, v)| v.len() >= 2) {
        let mut pairs = 0usize;
        let mut concordant = 0usize;
        for i in 0..ivs.len() {
            for j in (i + 1)..ivs.len() {
                pairs += 1;
                if intervals_overlap(ivs[i], ivs[j]) {
                    concordant += 1;
                }
            }
        }
        per_feature.insert((*feature).to_owned(), concordant as f64 / pairs as f64);
    }
    if per_feature.is_empty() {
        return Err(StabilityError::NoSharedFeature);
    }
    let score = per_feature.values().sum::<f64>() / per_feature.len() as f64;
    Ok((score, per_feature))
}

pub fn report(explanations: Vec<Explanation>, confidence_level: f64) -> Result<StabilityReport, StabilityError> {
    let vsi = vsi(&explanations)?;
    let (csi, per_feature_concordance) = csi(&explanations, confidence_level)?;
    Ok(StabilityReport {
        csi,
        vsi,
        confidence_level,
        per_feature_concordance,
        pairwise_jaccard: pairwise_jaccard(&explanations),
        explanations,
    })
}

/// `run_repeated` followed by both indices.
pub fn assess<P: Predictor + ?Sized>(
    predictor: &P,
    feature_names: &[String],
    stats: &FeatureStats,
    reference: &[f64],
    config: &StabilityConfig,
) -> Result<StabilityReport, StabilityError> {
    let explanations = run_repeated(predictor, feature_names, stats, reference, config)?;
    report(explanations, config.confidence_level)
}
