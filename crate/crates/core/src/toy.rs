//! The one-dimensional toy study: `y = sin(x) x + 10` sampled on `[0, 10]`,
//! explained through a degree-5 polynomial fit.

use nalgebra::DMatrix;
use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::{PolynomialError, PolynomialModel};
use crate::dataset::TabularDataset;

pub const CANONICAL_SEED: u64 = 15;
pub const TOY_DEGREE: usize = 5;
/// The canonical reference is the kept point closest to this abscissa.
pub const REFERENCE_ANCHOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub x_range: (f64, f64),
    pub n_candidates: usize,
    pub n_kept: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            x_range: (0.0, 10.0),
            n_candidates: 100,
            n_kept: 20,
            seed: CANONICAL_SEED,
        }
    }
}

pub fn dgp(x: f64) -> f64 {
    x.sin() * x + 10.0
}

/// Draws `n_candidates` uniform abscissae, keeps `n_kept` of them uniformly
/// without replacement (in draw order) and labels them with the noiseless DGP.
pub fn generate(spec: &ToySpec) -> TabularDataset {
    let (lo, hi) = spec.x_range;
    assert!(
        lo < hi && spec.n_kept <= spec.n_candidates && spec.n_kept >= 2,
        "invalid toy spec"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uniform = Uniform::new(lo, hi).expect("valid range");
    let candidates: Vec<f64> = (0..spec.n_candidates).map(|_| rng.sample(uniform)).collect();
    let mut kept = rand::seq::index::sample(&mut rng, spec.n_candidates, spec.n_kept).into_vec();
    kept.sort_unstable();
    let xs: Vec<f64> = kept.iter().map(|&i| candidates[i]).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| dgp(x)).collect();
    TabularDataset::new(
        vec!["x".to_owned()],
        DMatrix::from_column_slice(xs.len(), 1, &xs),
        Some(ys),
    )
    .expect("toy dataset is valid by construction")
}

pub fn canonical_dataset() -> TabularDataset {
    generate(&ToySpec::default())
}

pub fn build_toy_model(data: &TabularDataset) -> Result<PolynomialModel, PolynomialError> {
    PolynomialModel::fit(data, TOY_DEGREE)
}

/// Index of the row whose `x` is closest to [`REFERENCE_ANCHOR`].
pub fn reference_row(data: &TabularDataset) -> usize {
    data.rows()
        .column(0)
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - REFERENCE_ANCHOR)
                .abs()
                .total_cmp(&(b.1 - REFERENCE_ANCHOR).abs())
        })
        .map(|(i, _)| i)
        .expect("non-empty dataset")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn dgp_values() {
        assert_eq!(dgp(0.0), 10.0);
        assert!((dgp(FRAC_PI_2) - (FRAC_PI_2 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn generated_rows_follow_dgp() {
        let data = canonical_dataset();
        assert_eq!(data.n_rows(), 20);
        let y = data.target().unwrap();
        for (x, y) in data.rows().column(0).iter().zip(y) {
            assert!((0.0..10.0).contains(x));
            assert!((x.sin() * x + 10.0 - y).abs() < 1e-12);
        }
        assert_eq!(data, canonical_dataset());
        let other = generate(&ToySpec {
            seed: 1,
            ..ToySpec::default()
        });
        assert_ne!(data, other);
    }

    #[test]
    fn toy_model_fits_and_differentiates() {
        let data = canonical_dataset();
        let model = build_toy_model(&data).unwrap();
        let y = data.target().unwrap();
        let mae = data
            .rows()
            .column(0)
            .iter()
            .zip(y)
            .map(|(x, y)| (model.eval(*x) - y).abs())
            .sum::<f64>()
            / y.len() as f64;
        assert!(mae < 1.0, "training MAE {mae}");

        let x = data.rows()[(reference_row(&data), 0)];
        let h = 1e-5;
        let fd = (model.eval(x + h) - model.eval(x - h)) / (2.0 * h);
        let d = model.derivative(x);
        assert!((fd - d).abs() <= 1e-4 * d.abs().max(1e-3), "{fd} vs {d}");
    }

    #[test]
    fn reference_is_nearest_kept_point() {
        let data = canonical_dataset();
        let r = reference_row(&data);
        let xr = data.rows()[(r, 0)];
        for x in data.rows().column(0).iter() {
            assert!((xr - REFERENCE_ANCHOR).abs() <= (x - REFERENCE_ANCHOR).abs());
        }
    }
}
